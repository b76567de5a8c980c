//! Deterministic scripted completion client for tests and simulations.
//!
//! A scripted client answers from a fixed script instead of a model, so
//! whole-pipeline runs are reproducible byte for byte. Latency is
//! simulated: the client reports a configured `latency_ms` without
//! sleeping, which lets simulated wall-clock runs stay deterministic.
//!
//! Script forms:
//!
//! * exact map: full prompt text -> response;
//! * hashed map: sha256(prompt) -> response, for scripts built offline
//!   without shipping prompt text;
//! * oracle table: (sample text, category label) -> yes/no, answered by
//!   reading the `Sample:` and `Category label:` lines out of the binary
//!   prompt, with an optional default for missing pairs;
//! * rule: an arbitrary deterministic function of the request and its
//!   repeat index.

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Duration;

use super::{CallStats, CompletionRequest, CompletionResponse, LlmClient, LlmError, StatsCell};
use crate::hash::sha256_hex;

/// Deterministic response rule: request plus repeat index -> response
/// text, or `None` for "script has no answer".
pub type ScriptRule = dyn Fn(&CompletionRequest, u64) -> Option<String> + Send + Sync;

enum Script {
    ExactMap(HashMap<String, String>),
    HashedMap(HashMap<String, String>),
    Oracle {
        answers: HashMap<(String, String), bool>,
        default: Option<bool>,
    },
    Rule(Box<ScriptRule>),
}

/// Fields a binary prompt exposes to oracle scripts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptFields {
    pub category_label: String,
    pub sample_text: String,
}

/// Pulls the `Category label:` and `Sample:` lines out of a rendered
/// binary prompt. Returns `None` if either line is missing. Oracle
/// scripts only work for single-line sample texts, since extraction is
/// line-based.
pub fn extract_prompt_fields(prompt: &str) -> Option<PromptFields> {
    let mut category_label = None;
    let mut sample_text = None;
    for line in prompt.lines() {
        if let Some(rest) = line.strip_prefix("Category label: ") {
            category_label = Some(rest.to_owned());
        } else if let Some(rest) = line.strip_prefix("Sample: ") {
            sample_text = Some(rest.to_owned());
        }
    }
    Some(PromptFields {
        category_label: category_label?,
        sample_text: sample_text?,
    })
}

pub struct ScriptedLlm {
    script: Script,
    latency_ms: u64,
    /// Real sleep per call, used by concurrency tests to widen the window
    /// in which calls overlap. Zero by default.
    simulated_work: Duration,
    max_in_flight: usize,
    stats: StatsCell,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    repeat_counters: Mutex<HashMap<String, u64>>,
}

impl ScriptedLlm {
    fn with_script(script: Script) -> Self {
        Self {
            script,
            latency_ms: 0,
            simulated_work: Duration::ZERO,
            max_in_flight: 4,
            stats: StatsCell::default(),
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            repeat_counters: Mutex::new(HashMap::new()),
        }
    }

    /// Script keyed by full prompt text.
    pub fn from_map(map: HashMap<String, String>) -> Self {
        Self::with_script(Script::ExactMap(map))
    }

    /// Script keyed by lowercase hex sha256 of the prompt text.
    pub fn from_hashed_map(map: HashMap<String, String>) -> Self {
        Self::with_script(Script::HashedMap(map))
    }

    /// Oracle over (sample text, category label) pairs. `default` answers
    /// pairs missing from the table; `None` makes them script misses.
    pub fn from_oracle(
        answers: impl IntoIterator<Item = ((String, String), bool)>,
        default: Option<bool>,
    ) -> Self {
        Self::with_script(Script::Oracle {
            answers: answers.into_iter().collect(),
            default,
        })
    }

    /// Arbitrary deterministic rule.
    pub fn from_rule(
        rule: impl Fn(&CompletionRequest, u64) -> Option<String> + Send + Sync + 'static,
    ) -> Self {
        Self::with_script(Script::Rule(Box::new(rule)))
    }

    /// Latency each call reports (not slept).
    pub fn with_latency_ms(mut self, latency_ms: u64) -> Self {
        self.latency_ms = latency_ms;
        self
    }

    pub fn with_max_in_flight(mut self, max_in_flight: usize) -> Self {
        self.max_in_flight = max_in_flight.max(1);
        self
    }

    /// Makes each call really sleep, so tests can observe overlap.
    pub fn with_simulated_work(mut self, work: Duration) -> Self {
        self.simulated_work = work;
        self
    }

    /// Highest number of concurrent in-flight calls observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::Relaxed)
    }

    /// Repeat index for a prompt: the request seed when present, else a
    /// per-prompt call counter (0-based). Seeds keep repeats deterministic
    /// under concurrent dispatch.
    fn repeat_index(&self, request: &CompletionRequest) -> u64 {
        if let Some(seed) = request.seed {
            return seed;
        }
        let mut counters = self.repeat_counters.lock().expect("counter lock poisoned");
        let counter = counters.entry(request.prompt.clone()).or_insert(0);
        let index = *counter;
        *counter += 1;
        index
    }

    fn respond(&self, request: &CompletionRequest) -> Result<String, LlmError> {
        let miss = || LlmError::ScriptMiss {
            prompt_sha256: sha256_hex(&request.prompt),
        };
        match &self.script {
            Script::ExactMap(map) => map.get(&request.prompt).cloned().ok_or_else(miss),
            Script::HashedMap(map) => map
                .get(&sha256_hex(&request.prompt))
                .cloned()
                .ok_or_else(miss),
            Script::Oracle { answers, default } => {
                let fields = extract_prompt_fields(&request.prompt).ok_or_else(miss)?;
                let yes = answers
                    .get(&(fields.sample_text, fields.category_label))
                    .copied()
                    .or(*default)
                    .ok_or_else(miss)?;
                Ok(if yes { "Yes".to_owned() } else { "No".to_owned() })
            }
            Script::Rule(rule) => {
                let index = self.repeat_index(request);
                rule(request, index).ok_or_else(miss)
            }
        }
    }
}

impl LlmClient for ScriptedLlm {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, LlmError> {
        if request.prompt.is_empty() {
            return Err(LlmError::InvalidRequest {
                reason: "empty prompt".to_owned(),
            });
        }
        self.stats.record_request();
        self.stats.record_attempt();

        let current = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(current, Ordering::SeqCst);
        if !self.simulated_work.is_zero() {
            std::thread::sleep(self.simulated_work);
        }
        let outcome = self.respond(request);
        self.in_flight.fetch_sub(1, Ordering::SeqCst);

        match outcome {
            Ok(text) => {
                self.stats.record_success();
                let completion_tokens = text.split_whitespace().count() as u64;
                Ok(CompletionResponse {
                    prompt_tokens: request.prompt.split_whitespace().count() as u64,
                    completion_tokens,
                    text,
                    latency_ms: self.latency_ms,
                    attempts: 1,
                })
            }
            Err(error) => {
                self.stats.record_failure();
                Err(error)
            }
        }
    }

    fn max_in_flight(&self) -> usize {
        self.max_in_flight
    }

    fn stats(&self) -> CallStats {
        self.stats.snapshot()
    }
}
