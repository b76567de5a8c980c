//! Run configuration: one TOML file describes a whole run — paths, walk
//! mode, decision policy, model endpoints, and per-command sections.
//!
//! The file is the single source of truth for reproducibility; the only
//! command-line overrides are the global flags (`--seed`, `--verbose`).
//! Unknown keys are rejected so typos fail loudly, and secrets never
//! appear in the file: endpoint sections name an environment variable
//! (`auth_env`) and the key is read from the process environment at
//! client-build time.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::Deserialize;

use rac_core::engine::{EngineOptions, RacMode, WallClock};
use rac_core::llm::{HttpLlmClient, HttpLlmConfig, LlmClient, RetryConfig, ScriptedLlm};
use rac_core::policy::DecisionPolicy;
use rac_core::prompting::TemplateSet;
use rac_core::retrieval::{
    EmbeddingProvider, FileVectorProvider, HttpEmbedder, HttpEmbedderConfig, ReprMode,
};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("config {path}: {message}")]
    Parse { path: String, message: String },
    #[error("{0}")]
    Invalid(String),
    #[error("missing [{0}] section required by this command")]
    MissingSection(&'static str),
    #[error("{role} file not found: {path}")]
    MissingFile { role: &'static str, path: String },
    #[error("environment variable {name} (named by {field}) is not set")]
    MissingEnv { name: String, field: &'static str },
}

fn invalid(message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(message.into())
}

/// Walk mode plus the truncation depth that `truncated` requires.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeName {
    Full,
    Truncated,
    RandomOrder,
    AllInOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockName {
    System,
    Simulated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathsSection {
    pub schema: Option<PathBuf>,
    pub dataset: Option<PathBuf>,
    pub index: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Completed-sample journal for resumable labeling; defaults to
    /// `<output>.checkpoint`.
    pub checkpoint: Option<PathBuf>,
    /// Per-run cost ledger; defaults to `<output>.ledger.json`.
    pub ledger: Option<PathBuf>,
    /// Directory of prompt template overrides.
    pub templates: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub mode: ModeName,
    /// Walk depth; required by (and only meaningful for) `truncated`.
    pub max_steps: Option<u32>,
    /// Category representation to embed: "L", "D", or "L+D".
    #[serde(default = "default_repr")]
    pub repr: ReprMode,
    #[serde(default = "default_true")]
    pub include_description: bool,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_parallelism")]
    pub parallelism: usize,
    #[serde(default = "default_clock")]
    pub clock: ClockName,
}

fn default_repr() -> ReprMode {
    ReprMode::LplusD
}

fn default_true() -> bool {
    true
}

fn default_parallelism() -> usize {
    1
}

fn default_clock() -> ClockName {
    ClockName::System
}

/// Model endpoint. `http` talks to a chat-completion server; `scripted`
/// answers binary prompts from a committed oracle table, which makes
/// whole runs hermetic and byte-reproducible.
#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LlmSection {
    Http {
        base_url: String,
        model: String,
        /// Request path on the endpoint.
        path: Option<String>,
        /// Name of the environment variable holding the bearer token.
        auth_env: Option<String>,
        timeout_ms: Option<u64>,
        max_attempts: Option<u32>,
        base_backoff_ms: Option<u64>,
        max_backoff_ms: Option<u64>,
        max_in_flight: Option<usize>,
    },
    Scripted {
        /// Oracle table: `{"sample", "category", "answer"}` JSON lines.
        script: PathBuf,
        /// Answer for pairs missing from the table; omit to make misses
        /// hard errors.
        default_answer: Option<bool>,
        /// Latency each call reports (for the simulated clock).
        #[serde(default)]
        latency_ms: u64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum EmbedderSection {
    Http {
        base_url: String,
        model: String,
        path: Option<String>,
        auth_env: Option<String>,
        timeout_ms: Option<u64>,
    },
    File {
        /// Precomputed vectors: `{"text_sha256", "vector"}` JSON lines.
        vectors: PathBuf,
        /// Identity recorded in (and checked against) the index.
        id: String,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemaGenSection {
    /// Grouped examples: `{"provisional_id", "text"}` JSON lines.
    pub examples: PathBuf,
    /// Short domain phrase inserted into generation prompts.
    pub domain: String,
    pub output: PathBuf,
    #[serde(default = "default_samples_per_class")]
    pub samples_per_class: usize,
    #[serde(default = "default_gen_max_tokens")]
    pub max_tokens: u32,
}

fn default_samples_per_class() -> usize {
    10
}

fn default_gen_max_tokens() -> u32 {
    128
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    /// Positive pairs drawn per class (matched by an equal number of
    /// negatives).
    pub pairs_per_class: usize,
    /// Run all four cells {L, L+D} x {no_cot, cot} instead of the single
    /// configured combination.
    #[serde(default)]
    pub sweep: bool,
    /// Report destination; stdout when omitted.
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_macro_over")]
    pub macro_over: rac_core::eval::MacroAveraging,
    /// Report destination; stdout when omitted.
    pub output: Option<PathBuf>,
    /// When set, also export labeled predictions as `{"text", "label"}`
    /// training lines to this path.
    pub distill_output: Option<PathBuf>,
    #[serde(default = "default_label_form")]
    pub distill_labels: rac_core::eval::LabelForm,
}

fn default_macro_over() -> rac_core::eval::MacroAveraging {
    rac_core::eval::MacroAveraging::GoldClasses
}

fn default_label_form() -> rac_core::eval::LabelForm {
    rac_core::eval::LabelForm::Names
}

/// The whole parsed config file.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub paths: PathsSection,
    pub run: RunSection,
    #[serde(default = "DecisionPolicy::default")]
    pub policy: DecisionPolicy,
    pub llm: Option<LlmSection>,
    pub embedder: Option<EmbedderSection>,
    pub schemagen: Option<SchemaGenSection>,
    pub benchmark: Option<BenchmarkSection>,
    #[serde(default)]
    pub eval: Option<EvalSection>,
}

impl RunConfig {
    /// Parses a config file. Structural validation only; per-command
    /// requirements are checked by [`RunConfig::validate_for`].
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.display().to_string(),
            source,
        })?;
        let mut config: RunConfig =
            toml::from_str(&text).map_err(|err| ConfigError::Parse {
                path: path.display().to_string(),
                message: err.to_string(),
            })?;
        // Relative paths are relative to the config file, so a run
        // directory can be moved or archived wholesale.
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let paths = &mut self.paths;
        [
            &mut paths.schema,
            &mut paths.dataset,
            &mut paths.index,
            &mut paths.output,
            &mut paths.checkpoint,
            &mut paths.ledger,
            &mut paths.templates,
        ]
        .into_iter()
        .flatten()
        .for_each(&rebase);
        if let Some(LlmSection::Scripted { script, .. }) = &mut self.llm {
            rebase(script);
        }
        if let Some(EmbedderSection::File { vectors, .. }) = &mut self.embedder {
            rebase(vectors);
        }
        if let Some(section) = &mut self.schemagen {
            rebase(&mut section.examples);
            rebase(&mut section.output);
        }
        if let Some(section) = &mut self.benchmark {
            if let Some(output) = &mut section.output {
                rebase(output);
            }
        }
        if let Some(section) = &mut self.eval {
            if let Some(output) = &mut section.output {
                rebase(output);
            }
            if let Some(distill) = &mut section.distill_output {
                rebase(distill);
            }
        }
    }

    /// The engine walk mode, with truncation depth folded in.
    pub fn mode(&self) -> Result<RacMode, ConfigError> {
        Ok(match self.run.mode {
            ModeName::Full => RacMode::Full,
            ModeName::Truncated => {
                let max_steps = self.run.max_steps.ok_or_else(|| {
                    invalid("run.mode = \"truncated\" requires run.max_steps")
                })?;
                RacMode::Truncated { max_steps }
            }
            ModeName::RandomOrder => RacMode::RandomOrder,
            ModeName::AllInOne => RacMode::AllInOnePrompt,
        })
    }

    pub fn wall_clock(&self) -> WallClock {
        match self.run.clock {
            ClockName::System => WallClock::System,
            ClockName::Simulated => WallClock::Simulated,
        }
    }

    /// Engine options for labeling runs. `seed_override` comes from the
    /// global `--seed` flag.
    pub fn engine_options(&self, seed_override: Option<u64>) -> Result<EngineOptions, ConfigError> {
        Ok(EngineOptions {
            mode: self.mode()?,
            policy: self.policy.clone(),
            include_description: self.run.include_description,
            seed: seed_override.unwrap_or(self.run.seed),
            wall_clock: self.wall_clock(),
            ..EngineOptions::default()
        })
    }

    pub fn templates(&self) -> Result<TemplateSet, ConfigError> {
        match &self.paths.templates {
            Some(dir) => TemplateSet::from_dir(dir)
                .map_err(|err| invalid(format!("templates at {}: {err}", dir.display()))),
            None => Ok(TemplateSet::default()),
        }
    }

    fn require<'a, T>(
        section: &'a Option<T>,
        name: &'static str,
    ) -> Result<&'a T, ConfigError> {
        section.as_ref().ok_or(ConfigError::MissingSection(name))
    }

    fn require_path<'a>(
        path: &'a Option<PathBuf>,
        role: &'static str,
    ) -> Result<&'a Path, ConfigError> {
        let path = path
            .as_deref()
            .ok_or_else(|| invalid(format!("paths.{role} is required by this command")))?;
        Ok(path)
    }

    fn require_existing<'a>(
        path: &'a Option<PathBuf>,
        role: &'static str,
    ) -> Result<&'a Path, ConfigError> {
        let path = Self::require_path(path, role)?;
        if !path.exists() {
            return Err(ConfigError::MissingFile {
                role,
                path: path.display().to_string(),
            });
        }
        Ok(path)
    }

    pub fn schema_path(&self) -> Result<&Path, ConfigError> {
        Self::require_existing(&self.paths.schema, "schema")
    }

    pub fn dataset_path(&self) -> Result<&Path, ConfigError> {
        Self::require_existing(&self.paths.dataset, "dataset")
    }

    pub fn index_path(&self) -> Result<&Path, ConfigError> {
        Self::require_path(&self.paths.index, "index")
    }

    pub fn output_path(&self) -> Result<&Path, ConfigError> {
        Self::require_path(&self.paths.output, "output")
    }

    pub fn checkpoint_path(&self) -> Result<PathBuf, ConfigError> {
        if let Some(path) = &self.paths.checkpoint {
            return Ok(path.clone());
        }
        let output = self.output_path()?;
        Ok(append_extension(output, "checkpoint"))
    }

    pub fn ledger_path(&self) -> Result<PathBuf, ConfigError> {
        if let Some(path) = &self.paths.ledger {
            return Ok(path.clone());
        }
        let output = self.output_path()?;
        Ok(append_extension(output, "ledger.json"))
    }

    /// Builds the completion client, resolving `auth_env` against the
    /// process environment. No request is sent here.
    pub fn build_llm(&self) -> Result<Arc<dyn LlmClient>, ConfigError> {
        match Self::require(&self.llm, "llm")? {
            LlmSection::Http {
                base_url,
                model,
                path,
                auth_env,
                timeout_ms,
                max_attempts,
                base_backoff_ms,
                max_backoff_ms,
                max_in_flight,
            } => {
                let mut config = HttpLlmConfig::new(base_url.clone(), model.clone());
                if let Some(path) = path {
                    config.path = path.clone();
                }
                config.api_key = resolve_auth(auth_env, "llm.auth_env")?;
                if let Some(ms) = timeout_ms {
                    config.timeout = Duration::from_millis(*ms);
                }
                let mut retry = RetryConfig::default();
                if let Some(attempts) = max_attempts {
                    retry.max_attempts = *attempts;
                }
                if let Some(ms) = base_backoff_ms {
                    retry.base_backoff_ms = *ms;
                }
                if let Some(ms) = max_backoff_ms {
                    retry.max_backoff_ms = *ms;
                }
                config.retry = retry;
                if let Some(limit) = max_in_flight {
                    config.max_in_flight = *limit;
                }
                let client = HttpLlmClient::new(config)
                    .map_err(|err| invalid(format!("llm endpoint config: {err}")))?;
                Ok(Arc::new(client))
            }
            LlmSection::Scripted {
                script,
                default_answer,
                latency_ms,
            } => {
                let answers = read_oracle_script(script)?;
                let client =
                    ScriptedLlm::from_oracle(answers, *default_answer).with_latency_ms(*latency_ms);
                Ok(Arc::new(client))
            }
        }
    }

    /// Builds the embedding provider, resolving `auth_env` as for the
    /// completion client.
    pub fn build_embedder(&self) -> Result<Arc<dyn EmbeddingProvider>, ConfigError> {
        match Self::require(&self.embedder, "embedder")? {
            EmbedderSection::Http {
                base_url,
                model,
                path,
                auth_env,
                timeout_ms,
            } => {
                let mut config = HttpEmbedderConfig::new(base_url.clone(), model.clone());
                if let Some(path) = path {
                    config.path = path.clone();
                }
                config.api_key = resolve_auth(auth_env, "embedder.auth_env")?;
                if let Some(ms) = timeout_ms {
                    config.timeout = Duration::from_millis(*ms);
                }
                let embedder = HttpEmbedder::new(config)
                    .map_err(|err| invalid(format!("embedder endpoint config: {err}")))?;
                Ok(Arc::new(embedder))
            }
            EmbedderSection::File { vectors, id } => {
                if !vectors.exists() {
                    return Err(ConfigError::MissingFile {
                        role: "embedder.vectors",
                        path: vectors.display().to_string(),
                    });
                }
                let file = std::fs::File::open(vectors).map_err(|source| ConfigError::Read {
                    path: vectors.display().to_string(),
                    source,
                })?;
                let provider =
                    FileVectorProvider::from_reader(id.clone(), std::io::BufReader::new(file))
                        .map_err(|err| {
                            invalid(format!("vector file {}: {err}", vectors.display()))
                        })?;
                Ok(Arc::new(provider))
            }
        }
    }

    /// Checks everything a command needs before it touches the network
    /// or writes a file: sections present, referenced input files on
    /// disk, policy and mode combinations valid.
    pub fn validate_for(&self, command: CommandKind) -> Result<(), ConfigError> {
        self.policy
            .validate()
            .map_err(|err| invalid(format!("policy: {err}")))?;
        if self.run.parallelism == 0 {
            return Err(invalid("run.parallelism must be at least 1"));
        }
        let mode = self.mode()?;
        if let RacMode::Truncated { max_steps } = mode {
            if max_steps == 0 {
                return Err(invalid("run.max_steps must be at least 1"));
            }
        }
        if self.run.max_steps.is_some() && !matches!(mode, RacMode::Truncated { .. }) {
            return Err(invalid(
                "run.max_steps is only meaningful with run.mode = \"truncated\"",
            ));
        }
        match command {
            CommandKind::Index => {
                self.schema_path()?;
                self.index_path()?;
                Self::require(&self.embedder, "embedder")?;
            }
            CommandKind::Label => {
                self.schema_path()?;
                self.dataset_path()?;
                self.output_path()?;
                Self::require(&self.llm, "llm")?;
                if mode.needs_retrieval() {
                    Self::require_existing(&self.paths.index, "index")?;
                    Self::require(&self.embedder, "embedder")?;
                }
            }
            CommandKind::Eval => {
                self.schema_path()?;
                self.dataset_path()?;
                Self::require_existing(&self.paths.output, "output")?;
            }
            CommandKind::SchemaGen => {
                let section = Self::require(&self.schemagen, "schemagen")?;
                if !section.examples.exists() {
                    return Err(ConfigError::MissingFile {
                        role: "schemagen.examples",
                        path: section.examples.display().to_string(),
                    });
                }
                if section.domain.trim().is_empty() {
                    return Err(invalid("schemagen.domain must not be empty"));
                }
                Self::require(&self.llm, "llm")?;
            }
            CommandKind::Benchmark => {
                self.schema_path()?;
                self.dataset_path()?;
                let section = Self::require(&self.benchmark, "benchmark")?;
                if section.pairs_per_class == 0 {
                    return Err(invalid("benchmark.pairs_per_class must be at least 1"));
                }
                Self::require(&self.llm, "llm")?;
            }
        }
        // Secrets resolve now, not mid-run: a named-but-unset variable is
        // a config error before any call goes out.
        match command {
            CommandKind::Eval => {}
            _ => {
                if let Some(LlmSection::Http { auth_env, .. }) = &self.llm {
                    resolve_auth(auth_env, "llm.auth_env")?;
                }
                if let Some(EmbedderSection::Http { auth_env, .. }) = &self.embedder {
                    resolve_auth(auth_env, "embedder.auth_env")?;
                }
            }
        }
        // Backing files the command will read must exist up front, but
        // only for the sections it actually uses: a shared config may
        // name a vector table that an earlier command has yet to write.
        if matches!(
            command,
            CommandKind::Label | CommandKind::SchemaGen | CommandKind::Benchmark
        ) {
            if let Some(LlmSection::Scripted { script, .. }) = &self.llm {
                Self::existing_file(script, "llm.script")?;
            }
        }
        let uses_embedder = match command {
            CommandKind::Index => true,
            CommandKind::Label => mode.needs_retrieval(),
            _ => false,
        };
        if uses_embedder {
            if let Some(EmbedderSection::File { vectors, .. }) = &self.embedder {
                Self::existing_file(vectors, "embedder.vectors")?;
            }
        }
        Ok(())
    }

    fn existing_file(path: &Path, role: &'static str) -> Result<(), ConfigError> {
        if !path.exists() {
            return Err(ConfigError::MissingFile {
                role,
                path: path.display().to_string(),
            });
        }
        Ok(())
    }
}

/// Which command a config is being validated for.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CommandKind {
    Index,
    Label,
    Eval,
    SchemaGen,
    Benchmark,
}

fn resolve_auth(
    auth_env: &Option<String>,
    field: &'static str,
) -> Result<Option<String>, ConfigError> {
    match auth_env {
        None => Ok(None),
        Some(name) => match std::env::var(name) {
            Ok(value) => Ok(Some(value)),
            Err(_) => Err(ConfigError::MissingEnv {
                name: name.clone(),
                field,
            }),
        },
    }
}

/// `predictions.jsonl` -> `predictions.jsonl.checkpoint`.
fn append_extension(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".");
    name.push(suffix);
    path.with_file_name(name)
}

/// One line of a scripted oracle file.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct OracleLine {
    sample: String,
    category: String,
    answer: bool,
}

fn read_oracle_script(
    path: &Path,
) -> Result<HashMap<(String, String), bool>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let mut answers = HashMap::new();
    for (index, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: OracleLine = serde_json::from_str(line).map_err(|err| {
            invalid(format!(
                "oracle script {} line {}: {err}",
                path.display(),
                index + 1
            ))
        })?;
        if answers
            .insert((row.sample, row.category), row.answer)
            .is_some()
        {
            return Err(invalid(format!(
                "oracle script {} line {}: duplicate (sample, category) pair",
                path.display(),
                index + 1
            )));
        }
    }
    Ok(answers)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(toml_text: &str) -> RunConfig {
        toml::from_str(toml_text).expect("config parses")
    }

    const MINIMAL: &str = r#"
[paths]

[run]
mode = "full"
"#;

    #[test]
    fn minimal_config_parses_with_defaults() {
        let config = parse(MINIMAL);
        assert_eq!(config.run.seed, 0);
        assert_eq!(config.run.parallelism, 1);
        assert!(config.run.include_description);
        assert_eq!(config.policy, DecisionPolicy::agreement());
        assert_eq!(config.mode().unwrap(), RacMode::Full);
        assert_eq!(config.wall_clock(), WallClock::System);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = format!("{MINIMAL}\n[llm]\nkind = \"http\"\nbase_url = \"x\"\nmodel = \"m\"\napi_key = \"sk-123\"\n");
        let err = toml::from_str::<RunConfig>(&bad).unwrap_err();
        // In particular, a literal secret in the file can never parse.
        assert!(err.to_string().contains("api_key"), "{err}");
    }

    #[test]
    fn truncated_mode_requires_max_steps() {
        let config = parse("[paths]\n\n[run]\nmode = \"truncated\"\n");
        let err = config.mode().unwrap_err();
        assert!(err.to_string().contains("max_steps"), "{err}");

        let config = parse("[paths]\n\n[run]\nmode = \"truncated\"\nmax_steps = 3\n");
        assert_eq!(config.mode().unwrap(), RacMode::Truncated { max_steps: 3 });
    }

    #[test]
    fn stray_max_steps_is_a_config_error() {
        let config = parse("[paths]\n\n[run]\nmode = \"full\"\nmax_steps = 3\n");
        let err = config.validate_for(CommandKind::Eval).unwrap_err();
        assert!(err.to_string().contains("only meaningful"), "{err}");
    }

    #[test]
    fn policy_section_round_trips_the_engine_policy() {
        let config = parse(
            "[paths]\n\n[run]\nmode = \"full\"\n\n[policy]\nrule = \"majority\"\nvariants = [\"cot\"]\nvotes_per_variant = 5\n",
        );
        assert_eq!(config.policy.votes_per_step(), 5);
    }

    #[test]
    fn backing_files_are_checked_only_for_commands_that_read_them() {
        let dir = tempfile::tempdir().unwrap();
        let exists = |name: &str| {
            let path = dir.path().join(name);
            std::fs::write(&path, "{}").unwrap();
            path.display().to_string()
        };
        let toml_text = format!(
            r#"
[paths]
schema = {schema:?}
dataset = {dataset:?}
index = {index:?}
output = "out.jsonl"

[run]
mode = "full"

[llm]
kind = "scripted"
script = {missing:?}

[embedder]
kind = "file"
vectors = {missing:?}
id = "e"
"#,
            schema = exists("schema.json"),
            dataset = exists("dataset.jsonl"),
            index = exists("index.bin"),
            missing = dir.path().join("not_written_yet.jsonl").display().to_string(),
        );
        let config = parse(&toml_text);
        // Label reads both the script and the vector table: fail early.
        let err = config.validate_for(CommandKind::Label).unwrap_err();
        assert!(err.to_string().contains("llm.script"), "{err}");
        // Index never touches the LLM script, but needs the vectors.
        let err = config.validate_for(CommandKind::Index).unwrap_err();
        assert!(err.to_string().contains("embedder.vectors"), "{err}");
        // Eval touches neither; the sections may point at future files.
        let err = config.validate_for(CommandKind::Eval).unwrap_err();
        assert!(err.to_string().contains("output"), "{err}");
    }

    #[test]
    fn named_but_unset_auth_env_is_a_config_error() {
        let toml_text = r#"
[paths]
schema = "/nonexistent/schema.json"

[run]
mode = "all_in_one"

[llm]
kind = "http"
base_url = "http://localhost:1"
model = "m"
auth_env = "RAC_TEST_AUTH_VAR_THAT_IS_NEVER_SET"
"#;
        let config = parse(toml_text);
        let err = resolve_auth(
            &match config.llm.as_ref().unwrap() {
                LlmSection::Http { auth_env, .. } => auth_env.clone(),
                _ => unreachable!(),
            },
            "llm.auth_env",
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::MissingEnv { .. }));
    }

    #[test]
    fn relative_paths_rebase_onto_the_config_directory() {
        let dir = tempfile::tempdir().unwrap();
        let config_path = dir.path().join("run.toml");
        std::fs::write(
            &config_path,
            "[paths]\nschema = \"schema.json\"\n\n[run]\nmode = \"full\"\n",
        )
        .unwrap();
        let config = RunConfig::load(&config_path).unwrap();
        assert_eq!(
            config.paths.schema.as_deref(),
            Some(dir.path().join("schema.json").as_path())
        );
    }

    #[test]
    fn checkpoint_and_ledger_paths_derive_from_output() {
        let config = parse(
            "[paths]\noutput = \"/runs/predictions.jsonl\"\n\n[run]\nmode = \"full\"\n",
        );
        assert_eq!(
            config.checkpoint_path().unwrap(),
            PathBuf::from("/runs/predictions.jsonl.checkpoint")
        );
        assert_eq!(
            config.ledger_path().unwrap(),
            PathBuf::from("/runs/predictions.jsonl.ledger.json")
        );
    }
}
