//! Command implementations behind the `rac` binary: index building,
//! labeling runs, evaluation, schema generation, and binary benchmarks.
//!
//! Every command validates its configuration — sections present, input
//! files on disk, policy/mode combination legal, named secrets resolvable
//! — before it opens a connection or writes a byte. Failures map to
//! distinct exit codes so schedulers can tell a bad config (nothing
//! happened) from a partial run (some samples labeled, some errored) from
//! a total failure.

use std::collections::HashSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::Serialize;

use rac_core::engine::{Engine, EngineError, EngineOptions, RacMode, RunLedger};
use rac_core::eval::{
    build_binary_benchmark, compute_multiclass_metrics, export_distillation_set, ClassAccuracy,
    MacroAveraging,
};
use rac_core::policy::DecisionPolicy;
use rac_core::retrieval::{build_index, load_index_file, save_index_file};
use rac_core::schemagen::{read_grouped_examples, SchemaGenConfig, SchemaGenerator};
use rac_core::types::{
    prediction_to_json_line, read_samples_file, read_schema_file, write_schema_file, Prediction,
    PromptVariant, SampleId,
};

use crate::config::{CommandKind, ConfigError, EvalSection, RunConfig};

/// Exit code 2: nothing ran.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code 3: the run finished but some samples errored.
pub const EXIT_PARTIAL: u8 = 3;
/// Exit code 4: the run produced no usable result.
pub const EXIT_TOTAL: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    /// Pre-run setup failure: unreadable inputs, incoherent engine
    /// configuration. Same exit code as config errors — nothing ran.
    #[error("{0}")]
    Setup(String),
    #[error(
        "{errored} of {completed} samples failed; completed predictions and the ledger were kept"
    )]
    Partial { errored: u64, completed: u64 },
    #[error("{0}")]
    Failed(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_) | Self::Setup(_) => EXIT_CONFIG,
            Self::Partial { .. } => EXIT_PARTIAL,
            Self::Failed(_) => EXIT_TOTAL,
        }
    }
}

fn setup(err: impl std::fmt::Display) -> CliError {
    CliError::Setup(err.to_string())
}

fn failed(err: impl std::fmt::Display) -> CliError {
    CliError::Failed(err.to_string())
}

fn ensure_parent_dir(path: &Path) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|err| failed(format!("creating {}: {err}", parent.display())))?;
        }
    }
    Ok(())
}

fn write_report_json(
    value: &impl Serialize,
    output: Option<&Path>,
    what: &str,
) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|err| failed(format!("serializing {what}: {err}")))?;
    match output {
        Some(path) => {
            ensure_parent_dir(path)?;
            fs::write(path, format!("{json}\n"))
                .map_err(|err| failed(format!("writing {}: {err}", path.display())))?;
            println!("{what} written to {}", path.display());
        }
        None => println!("{json}"),
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// index

/// Builds the category index and persists it: embed every category
/// representation once, store vectors beside schema identity so later
/// runs can verify compatibility.
pub fn cmd_index(config: &RunConfig) -> Result<(), CliError> {
    config.validate_for(CommandKind::Index)?;
    let schema = read_schema_file(config.schema_path()?).map_err(setup)?;
    let embedder = config.build_embedder()?;
    let index = build_index(&schema, embedder.as_ref(), config.run.repr).map_err(failed)?;
    let path = config.index_path()?;
    ensure_parent_dir(path)?;
    save_index_file(path, &index).map_err(failed)?;
    println!(
        "index written to {}: {} categories, dim {}, embedder {:?}, repr {}",
        path.display(),
        index.len(),
        index.dim(),
        index.embedder_id(),
        index.repr_mode(),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// label

/// Ledger file written beside the predictions: per-sample cost rows plus
/// the count of samples skipped by the resume logic.
#[derive(Debug, Serialize)]
struct LedgerFile {
    skipped: u64,
    #[serde(flatten)]
    ledger: RunLedger,
}

/// Reads the completed-sample journal. Each line is one JSON-encoded
/// sample id; a torn trailing line (crash mid-write) is dropped.
pub fn read_checkpoint(path: &Path) -> Result<HashSet<SampleId>, CliError> {
    let mut ids = HashSet::new();
    if !path.exists() {
        return Ok(ids);
    }
    let file = File::open(path).map_err(|err| setup(format!("{}: {err}", path.display())))?;
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|err| setup(format!("{}: {err}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<String>(&line) {
            Ok(id) => {
                ids.insert(SampleId::new(id));
            }
            Err(_) => log::warn!(
                "checkpoint {}: dropping malformed line {line:?}",
                path.display()
            ),
        }
    }
    Ok(ids)
}

/// Reconciles an existing output file before resuming: well-formed
/// prediction lines are kept (first occurrence of each sample wins),
/// torn or duplicate lines are dropped, and the file is rewritten only
/// when something had to be dropped. Returns the surviving sample ids.
pub fn reconcile_output(path: &Path) -> Result<HashSet<SampleId>, CliError> {
    let mut ids = HashSet::new();
    if !path.exists() {
        return Ok(ids);
    }
    let text =
        fs::read_to_string(path).map_err(|err| setup(format!("{}: {err}", path.display())))?;
    let mut kept: Vec<&str> = Vec::new();
    let mut dropped = 0usize;
    for line in text.lines() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<Prediction>(line) {
            Ok(prediction) if prediction.check_consistency().is_ok() => {
                if ids.insert(prediction.sample_id.clone()) {
                    kept.push(line);
                } else {
                    dropped += 1;
                }
            }
            _ => dropped += 1,
        }
    }
    if dropped > 0 {
        log::warn!(
            "output {}: dropping {dropped} torn or duplicate line(s) before resuming",
            path.display()
        );
        let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
        tmp_name.push(".reconcile-tmp");
        let tmp = path.with_file_name(tmp_name);
        let mut writer = BufWriter::new(
            File::create(&tmp).map_err(|err| setup(format!("{}: {err}", tmp.display())))?,
        );
        for line in &kept {
            writeln!(writer, "{line}").map_err(|err| setup(format!("{}: {err}", tmp.display())))?;
        }
        writer
            .into_inner()
            .map_err(|err| setup(format!("{}: {err}", tmp.display())))?
            .sync_all()
            .map_err(|err| setup(format!("{}: {err}", tmp.display())))?;
        fs::rename(&tmp, path).map_err(|err| setup(format!("{}: {err}", path.display())))?;
    }
    Ok(ids)
}

/// Labels the dataset: rank, walk, decide, append each prediction to the
/// output file as it completes (input order), journal its id to the
/// checkpoint, and write the cost ledger at the end.
///
/// Resume semantics: samples whose id is already in the checkpoint or the
/// output file are skipped, so re-running after an interruption never
/// duplicates a prediction. Errored samples are recorded in the ledger
/// only, which leaves them eligible for the next attempt.
pub fn cmd_label(config: &RunConfig, seed_override: Option<u64>) -> Result<(), CliError> {
    config.validate_for(CommandKind::Label)?;
    let schema = read_schema_file(config.schema_path()?).map_err(setup)?;
    let samples = read_samples_file(config.dataset_path()?).map_err(setup)?;
    let options = config.engine_options(seed_override)?;
    let templates = config.templates()?;
    let llm = config.build_llm()?;
    let (embedder, index) = if options.mode.needs_retrieval() {
        let index_path = config.index_path()?;
        let index = load_index_file(index_path)
            .map_err(|err| setup(format!("index {}: {err}", index_path.display())))?;
        (Some(config.build_embedder()?), Some(index))
    } else {
        (None, None)
    };
    let engine = Engine::new(schema, templates, llm, embedder, index, options)
        .map_err(engine_setup_error)?;

    let output_path = config.output_path()?.to_path_buf();
    let checkpoint_path = config.checkpoint_path()?;
    ensure_parent_dir(&output_path)?;
    ensure_parent_dir(&checkpoint_path)?;
    let mut skip = read_checkpoint(&checkpoint_path)?;
    skip.extend(reconcile_output(&output_path)?);

    let mut output = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&output_path)
            .map_err(|err| setup(format!("{}: {err}", output_path.display())))?,
    );
    let mut checkpoint = BufWriter::new(
        OpenOptions::new()
            .create(true)
            .append(true)
            .open(&checkpoint_path)
            .map_err(|err| setup(format!("{}: {err}", checkpoint_path.display())))?,
    );

    let run = engine
        .label_dataset(&samples, config.run.parallelism, &skip, |outcome| {
            let prediction = match outcome {
                Ok(prediction) => prediction,
                Err(error) => {
                    log::warn!("{error}");
                    return Ok(());
                }
            };
            let line = prediction_to_json_line(prediction)
                .map_err(|err| std::io::Error::other(err.to_string()))?;
            // Output first, then the journal: a crash between the two
            // writes leaves an id only in the output file, and the resume
            // skip-set is the union of both, so nothing duplicates.
            writeln!(output, "{line}")?;
            output.flush()?;
            writeln!(checkpoint, "{}", serde_json::to_string(prediction.sample_id.as_str())?)?;
            checkpoint.flush()?;
            Ok(())
        })
        .map_err(|err| failed(format!("labeling run: {err}")))?;

    let ledger_path = config.ledger_path()?;
    ensure_parent_dir(&ledger_path)?;
    let ledger_file = LedgerFile {
        skipped: run.skipped,
        ledger: run.ledger,
    };
    write_report_json(&ledger_file, Some(&ledger_path), "ledger")?;

    let totals = &ledger_file.ledger.totals;
    println!(
        "labeled {} / abstained {} / errored {} (skipped {} already done); \
         {} llm calls, {} retries; predictions in {}",
        totals.labeled,
        totals.abstained,
        totals.errored,
        run.skipped,
        totals.llm_calls,
        totals.retries,
        output_path.display(),
    );

    if totals.errored > 0 {
        if totals.errored == totals.samples {
            return Err(failed(format!(
                "every sample failed ({} of {})",
                totals.errored, totals.samples
            )));
        }
        return Err(CliError::Partial {
            errored: totals.errored,
            completed: totals.samples,
        });
    }
    Ok(())
}

/// Engine construction failures are coherence problems between
/// configured artifacts (schema vs index vs embedder), so they exit as
/// config errors: nothing has run yet.
fn engine_setup_error(err: EngineError) -> CliError {
    CliError::Setup(err.to_string())
}

// ---------------------------------------------------------------------------
// eval

/// Scores a prediction file against gold labels: coverage, micro/macro
/// F1, per-class confusion counts; optionally exports the labeled subset
/// as distillation training data.
pub fn cmd_eval(config: &RunConfig) -> Result<(), CliError> {
    config.validate_for(CommandKind::Eval)?;
    let schema = read_schema_file(config.schema_path()?).map_err(setup)?;
    let samples = read_samples_file(config.dataset_path()?).map_err(setup)?;
    let predictions_path = config.output_path()?;
    let predictions =
        rac_core::types::read_predictions_file(predictions_path).map_err(setup)?;

    let default_section;
    let section: &EvalSection = match &config.eval {
        Some(section) => section,
        None => {
            default_section = EvalSection {
                macro_over: MacroAveraging::GoldClasses,
                output: None,
                distill_output: None,
                distill_labels: rac_core::eval::LabelForm::Names,
            };
            &default_section
        }
    };

    let report = compute_multiclass_metrics(&predictions, &samples, &schema, section.macro_over)
        .map_err(failed)?;
    write_report_json(&report, section.output.as_deref(), "metrics report")?;

    if let Some(distill_path) = &section.distill_output {
        ensure_parent_dir(distill_path)?;
        let mut writer = BufWriter::new(
            File::create(distill_path)
                .map_err(|err| failed(format!("{}: {err}", distill_path.display())))?,
        );
        let written = export_distillation_set(
            &predictions,
            &samples,
            &schema,
            section.distill_labels,
            &mut writer,
        )
        .map_err(failed)?;
        writer.flush().map_err(failed)?;
        println!(
            "distillation set written to {}: {written} examples",
            distill_path.display()
        );
        if written == 0 {
            log::warn!("distillation set is empty: every evaluated prediction abstained");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// schemagen

/// Generates a label schema (names and descriptions) from clustered but
/// unlabeled example texts.
pub fn cmd_schemagen(config: &RunConfig, seed_override: Option<u64>) -> Result<(), CliError> {
    config.validate_for(CommandKind::SchemaGen)?;
    let section = config.schemagen.as_ref().expect("validated above");
    let file = File::open(&section.examples)
        .map_err(|err| setup(format!("{}: {err}", section.examples.display())))?;
    let groups = read_grouped_examples(BufReader::new(file)).map_err(setup)?;
    let llm = config.build_llm()?;
    let templates = config.templates()?;
    let mut gen_config = SchemaGenConfig::new(section.domain.clone());
    gen_config.samples_per_class = section.samples_per_class;
    gen_config.seed = seed_override.unwrap_or(config.run.seed);
    gen_config.max_tokens = section.max_tokens;

    let generator = SchemaGenerator::new(llm, templates, gen_config);
    let outcome = generator.build_schema(&groups).map_err(failed)?;
    for warning in &outcome.warnings {
        log::warn!("{warning}");
    }
    ensure_parent_dir(&section.output)?;
    write_schema_file(&section.output, &outcome.schema).map_err(failed)?;
    println!(
        "schema written to {}: {} categories from {} example groups ({} warnings)",
        section.output.display(),
        outcome.schema.len(),
        groups.len(),
        outcome.warnings.len(),
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// benchmark

/// One benchmark result cell: a (category representation, prompt
/// variants) combination and its macro-averaged binary accuracy.
#[derive(Debug, Serialize)]
struct BenchmarkCell {
    /// "L" (labels only) or "L+D" (labels plus descriptions).
    representation: &'static str,
    variants: Vec<PromptVariant>,
    macro_accuracy: f64,
    per_class: Vec<ClassAccuracy>,
    llm_calls: u64,
    retries: u64,
    wall_ms: u64,
}

#[derive(Debug, Serialize)]
struct BenchmarkReportFile {
    pairs_per_class: usize,
    total_pairs: usize,
    cells: Vec<BenchmarkCell>,
}

/// Runs the balanced yes/no benchmark: for each class, known members and
/// an equal number of non-members each get one binary membership step,
/// and accuracy is macro-averaged over classes. `sweep` runs all four
/// {L, L+D} x {no_cot, cot} combinations; otherwise the configured
/// policy and representation run once.
pub fn cmd_benchmark(config: &RunConfig, seed_override: Option<u64>) -> Result<(), CliError> {
    config.validate_for(CommandKind::Benchmark)?;
    let section = config.benchmark.as_ref().expect("validated above");
    let schema = read_schema_file(config.schema_path()?).map_err(setup)?;
    let samples = read_samples_file(config.dataset_path()?).map_err(setup)?;
    let seed = seed_override.unwrap_or(config.run.seed);
    let (benchmark, warnings) =
        build_binary_benchmark(&samples, &schema, section.pairs_per_class, seed)
            .map_err(setup)?;
    for warning in &warnings {
        log::warn!("{warning}");
    }
    let llm = config.build_llm()?;
    let templates = config.templates()?;

    // (include_description, variants) per cell.
    let cells_spec: Vec<(bool, Vec<PromptVariant>)> = if section.sweep {
        vec![
            (false, vec![PromptVariant::NoCot]),
            (false, vec![PromptVariant::Cot]),
            (true, vec![PromptVariant::NoCot]),
            (true, vec![PromptVariant::Cot]),
        ]
    } else {
        vec![(
            config.run.include_description,
            config.policy.variants.clone(),
        )]
    };

    let mut cells = Vec::with_capacity(cells_spec.len());
    for (include_description, variants) in cells_spec {
        let policy = DecisionPolicy::new(
            config.policy.rule,
            variants.clone(),
            config.policy.votes_per_variant,
        )
        .map_err(setup)?;
        // The walk mode is irrelevant here — each benchmark pair is a
        // single binary step — so the engine is built without retrieval.
        let options = EngineOptions {
            mode: RacMode::RandomOrder,
            policy,
            include_description,
            seed,
            wall_clock: config.wall_clock(),
            ..EngineOptions::default()
        };
        let engine = Engine::new(
            schema.clone(),
            templates.clone(),
            Arc::clone(&llm),
            None,
            None,
            options,
        )
        .map_err(engine_setup_error)?;
        let run = engine
            .run_binary_benchmark(&benchmark, config.run.parallelism)
            .map_err(|err| failed(format!("benchmark run: {err}")))?;
        cells.push(BenchmarkCell {
            representation: if include_description { "L+D" } else { "L" },
            variants,
            macro_accuracy: run.report.macro_accuracy,
            per_class: run.report.per_class,
            llm_calls: run.llm_calls,
            retries: run.retries,
            wall_ms: run.wall_ms,
        });
    }

    let report = BenchmarkReportFile {
        pairs_per_class: section.pairs_per_class,
        total_pairs: benchmark.total_pairs(),
        cells,
    };
    write_report_json(&report, section.output.as_deref(), "benchmark report")
}
