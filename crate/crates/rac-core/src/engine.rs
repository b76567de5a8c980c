//! The labeling engine: per-sample walks down the ranked category list,
//! dataset runs with bounded parallelism, and the binary benchmark
//! runner.
//!
//! A walk asks one binary question per candidate category, in retrieval
//! order, and stops at the first accept. Truncated mode abstains once a
//! step budget is exhausted; walking every candidate without an accept
//! abstains identically. The random-order mode walks a seeded shuffle of
//! the schema instead of retrieval ranking, and the all-in-one mode asks
//! a single prompt listing every category; both exist as baselines.
//!
//! Determinism: every sampled vote carries its repeat index as the
//! request seed, candidate orders are pure functions of (run seed, sample
//! id), and the simulated wall clock sums per-call reported latencies.
//! Scripted runs therefore produce byte-identical outputs at any
//! parallelism, since results are emitted in input order through a
//! reorder buffer.

use std::collections::{BTreeMap, HashSet};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::eval::{BinaryAccuracyReport, BinaryBenchmark, ClassBinaryOutcome};
use crate::llm::{CallStats, CompletionRequest, LlmClient};
use crate::policy::{decide, DecisionPolicy, PolicyError};
use crate::prompting::{
    parse_binary_answer, parse_multiclass_answer, render_binary_prompt, render_multiclass_prompt,
    PromptError, TemplateSet,
};
use crate::retrieval::{rank_categories, CategoryIndex, EmbeddingProvider, RetrievalError};
use crate::types::{
    validate_schema, BinaryAnswer, Category, CategoryId, Decision, LabelSchema, Outcome,
    Prediction, PromptVariant, Sample, SampleId, SchemaViolation, StepTrace, VoteRecord,
};

/// How candidates are ordered and how far a walk may go.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RacMode {
    /// Walk the full ranked list until an accept or exhaustion.
    Full,
    /// Walk at most `max_steps` ranked candidates, then abstain.
    Truncated { max_steps: u32 },
    /// Baseline: walk a seeded random permutation of the schema.
    RandomOrder,
    /// Baseline: one prompt listing every category, one completion.
    AllInOnePrompt,
}

impl RacMode {
    /// Whether the mode ranks candidates by embedding similarity (and so
    /// needs an embedder and a category index).
    pub fn needs_retrieval(self) -> bool {
        matches!(self, Self::Full | Self::Truncated { .. })
    }
}

/// Where wall-clock durations come from.
///
/// `System` reads real elapsed time. `Simulated` sums the latency each
/// completion reports (scripted clients report a configured constant),
/// which keeps outputs byte-identical across runs and parallelism levels.
/// Simulated time ignores call overlap: it is the sequential-equivalent
/// latency of the sample's calls.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WallClock {
    #[default]
    System,
    Simulated,
}

#[derive(Debug, Clone)]
pub struct EngineOptions {
    pub mode: RacMode,
    pub policy: DecisionPolicy,
    /// Whether prompts (and the multiclass category list) carry category
    /// descriptions. Requires every category to have one.
    pub include_description: bool,
    pub seed: u64,
    /// Temperature for sampled repeats (`votes_per_variant > 1`); single
    /// votes always run at temperature 0.
    pub sampled_temperature: f64,
    /// Completion budget for direct answers and the multiclass prompt.
    pub max_tokens_direct: u32,
    /// Completion budget for reasoning answers.
    pub max_tokens_reasoning: u32,
    pub wall_clock: WallClock,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            mode: RacMode::Full,
            policy: DecisionPolicy::default(),
            include_description: true,
            seed: 0,
            sampled_temperature: 0.7,
            max_tokens_direct: 16,
            max_tokens_reasoning: 512,
            wall_clock: WallClock::System,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EngineError {
    #[error("schema invalid: {}", .0.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("; "))]
    InvalidSchema(Vec<SchemaViolation>),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("mode requires an embedder and a category index")]
    MissingRetrieval,
    #[error("truncated mode requires max_steps of at least 1")]
    InvalidTruncation,
    #[error("index entries do not match the schema's categories")]
    IndexSchemaMismatch,
    #[error("index was built by embedder {index:?} but the run uses {embedder:?}")]
    EmbedderMismatch { index: String, embedder: String },
    #[error("category {category_id:?} has no description but the run includes descriptions")]
    MissingDescription { category_id: String },
    #[error("failed to write a result: {0}")]
    Sink(std::io::Error),
    #[error("benchmark pair for sample {sample_id:?} failed: {message}")]
    BenchmarkPair { sample_id: String, message: String },
}

/// A per-sample failure. The walk stops at the first failing call; counts
/// cover the work done before the failure so ledgers stay truthful about
/// endpoint load.
#[derive(Debug, Clone, thiserror::Error)]
#[error("sample {sample_id}: {message}")]
pub struct SampleError {
    pub sample_id: SampleId,
    pub message: String,
    pub steps: u32,
    pub llm_calls: u64,
    pub retries: u64,
    pub wall_ms: u64,
}

/// Result of one sample: a prediction or an isolated failure.
pub type SampleOutcome = Result<Prediction, SampleError>;

#[derive(Debug, Default)]
struct CostTracker {
    calls: u64,
    retries: u64,
    simulated_ms: u64,
}

/// Terminal state of a row in the run ledger.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LedgerOutcome {
    Labeled,
    Abstained,
    Errored,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub sample_id: SampleId,
    pub outcome: LedgerOutcome,
    pub steps: u32,
    pub llm_calls: u64,
    pub retries: u64,
    pub wall_ms: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub samples: u64,
    pub labeled: u64,
    pub abstained: u64,
    pub errored: u64,
    pub llm_calls: u64,
    pub retries: u64,
    pub wall_ms: u64,
}

/// Means over non-errored samples; absent when every sample errored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerMeans {
    pub steps: f64,
    pub llm_calls: f64,
    pub wall_ms: f64,
}

/// Per-sample cost accounting for one dataset run. `llm_calls` counts
/// logical completions; transport retries are tracked separately.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub rows: Vec<LedgerRow>,
    pub totals: LedgerTotals,
    pub means: Option<LedgerMeans>,
}

impl RunLedger {
    pub fn from_rows(rows: Vec<LedgerRow>) -> Self {
        let mut totals = LedgerTotals::default();
        let mut ok_rows = 0u64;
        let (mut steps_sum, mut calls_sum, mut wall_sum) = (0u64, 0u64, 0u64);
        for row in &rows {
            totals.samples += 1;
            match row.outcome {
                LedgerOutcome::Labeled => totals.labeled += 1,
                LedgerOutcome::Abstained => totals.abstained += 1,
                LedgerOutcome::Errored => totals.errored += 1,
            }
            totals.llm_calls += row.llm_calls;
            totals.retries += row.retries;
            totals.wall_ms += row.wall_ms;
            if row.outcome != LedgerOutcome::Errored {
                ok_rows += 1;
                steps_sum += u64::from(row.steps);
                calls_sum += row.llm_calls;
                wall_sum += row.wall_ms;
            }
        }
        let means = (ok_rows > 0).then(|| LedgerMeans {
            steps: steps_sum as f64 / ok_rows as f64,
            llm_calls: calls_sum as f64 / ok_rows as f64,
            wall_ms: wall_sum as f64 / ok_rows as f64,
        });
        Self { rows, totals, means }
    }
}

fn ledger_row(outcome: &SampleOutcome) -> LedgerRow {
    match outcome {
        Ok(prediction) => LedgerRow {
            sample_id: prediction.sample_id.clone(),
            outcome: match prediction.outcome {
                Outcome::Labeled { .. } => LedgerOutcome::Labeled,
                Outcome::Abstained => LedgerOutcome::Abstained,
            },
            steps: prediction.trace.len() as u32,
            llm_calls: prediction.llm_calls,
            retries: 0,
            wall_ms: prediction.wall_ms,
        },
        Err(error) => LedgerRow {
            sample_id: error.sample_id.clone(),
            outcome: LedgerOutcome::Errored,
            steps: error.steps,
            llm_calls: error.llm_calls,
            retries: error.retries,
            wall_ms: error.wall_ms,
        },
    }
}

/// Everything a finished dataset run reports.
#[derive(Debug)]
pub struct DatasetRun {
    /// One outcome per run sample, in input order.
    pub outcomes: Vec<SampleOutcome>,
    pub ledger: RunLedger,
    /// Samples excluded up front by the skip set.
    pub skipped: u64,
}

/// Aggregate result of a binary benchmark run.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkRun {
    pub report: BinaryAccuracyReport,
    pub llm_calls: u64,
    pub retries: u64,
    pub wall_ms: u64,
}

pub struct Engine {
    schema: LabelSchema,
    templates: TemplateSet,
    llm: Arc<dyn LlmClient>,
    embedder: Option<Arc<dyn EmbeddingProvider>>,
    index: Option<CategoryIndex>,
    options: EngineOptions,
}

impl std::fmt::Debug for Engine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Engine")
            .field("categories", &self.schema.len())
            .field("mode", &self.options.mode)
            .field("policy", &self.options.policy)
            .field("has_index", &self.index.is_some())
            .finish_non_exhaustive()
    }
}

impl Engine {
    /// Validates the whole configuration up front: schema, policy,
    /// templates, retrieval dependencies for the chosen mode, index/schema
    /// and index/embedder consistency, and description availability.
    /// A constructed engine cannot fail for configuration reasons.
    pub fn new(
        schema: LabelSchema,
        templates: TemplateSet,
        llm: Arc<dyn LlmClient>,
        embedder: Option<Arc<dyn EmbeddingProvider>>,
        index: Option<CategoryIndex>,
        options: EngineOptions,
    ) -> Result<Self, EngineError> {
        let violations = validate_schema(&schema);
        if !violations.is_empty() {
            return Err(EngineError::InvalidSchema(violations));
        }
        options.policy.validate()?;
        templates.validate()?;
        if let RacMode::Truncated { max_steps } = options.mode {
            if max_steps == 0 {
                return Err(EngineError::InvalidTruncation);
            }
        }
        if options.mode.needs_retrieval() {
            let (embedder, index) = match (&embedder, &index) {
                (Some(embedder), Some(index)) => (embedder, index),
                _ => return Err(EngineError::MissingRetrieval),
            };
            if !index.matches_schema(&schema) {
                return Err(EngineError::IndexSchemaMismatch);
            }
            if index.embedder_id() != embedder.embedder_id() {
                return Err(EngineError::EmbedderMismatch {
                    index: index.embedder_id().to_owned(),
                    embedder: embedder.embedder_id().to_owned(),
                });
            }
        }
        if options.include_description {
            if let Some(category) = schema.categories.iter().find(|c| !c.has_description()) {
                return Err(EngineError::MissingDescription {
                    category_id: category.id.as_str().to_owned(),
                });
            }
        }
        Ok(Self {
            schema,
            templates,
            llm,
            embedder,
            index,
            options,
        })
    }

    pub fn schema(&self) -> &LabelSchema {
        &self.schema
    }

    pub fn options(&self) -> &EngineOptions {
        &self.options
    }

    /// Counters of the underlying completion client.
    pub fn llm_stats(&self) -> CallStats {
        self.llm.stats()
    }

    fn sample_error(
        &self,
        sample: &Sample,
        steps: u32,
        cost: &CostTracker,
        started: Instant,
        message: String,
    ) -> SampleError {
        SampleError {
            sample_id: sample.id.clone(),
            message,
            steps,
            llm_calls: cost.calls,
            retries: cost.retries,
            wall_ms: self.wall_ms(cost, started),
        }
    }

    fn wall_ms(&self, cost: &CostTracker, started: Instant) -> u64 {
        match self.options.wall_clock {
            WallClock::System => started.elapsed().as_millis() as u64,
            WallClock::Simulated => cost.simulated_ms,
        }
    }

    /// Candidate order for one sample: ranked by the index for retrieval
    /// modes, seeded shuffle for the random baseline. Returned as
    /// (category id, 1-based rank, similarity).
    fn candidates(
        &self,
        sample: &Sample,
        cost: &CostTracker,
        started: Instant,
    ) -> Result<Vec<(CategoryId, u32, f64)>, SampleError> {
        match self.options.mode {
            RacMode::Full | RacMode::Truncated { .. } => {
                let embedder = self.embedder.as_ref().expect("validated at construction");
                let index = self.index.as_ref().expect("validated at construction");
                let query = embed_query(embedder.as_ref(), &sample.text).map_err(|err| {
                    self.sample_error(sample, 0, cost, started, err.to_string())
                })?;
                let ranked = rank_categories(index, &query).map_err(|err| {
                    self.sample_error(sample, 0, cost, started, err.to_string())
                })?;
                Ok(ranked
                    .candidates()
                    .iter()
                    .enumerate()
                    .map(|(position, candidate)| {
                        (
                            candidate.category_id.clone(),
                            (position + 1) as u32,
                            candidate.similarity,
                        )
                    })
                    .collect())
            }
            RacMode::RandomOrder => {
                let mut ids: Vec<CategoryId> = self
                    .schema
                    .categories
                    .iter()
                    .map(|c| c.id.clone())
                    .collect();
                let mut rng = per_sample_rng(self.options.seed, &sample.id);
                ids.shuffle(&mut rng);
                Ok(ids
                    .into_iter()
                    .enumerate()
                    .map(|(position, id)| (id, (position + 1) as u32, 0.0))
                    .collect())
            }
            RacMode::AllInOnePrompt => {
                unreachable!("all-in-one mode routes through label_sample_all_in_one")
            }
        }
    }

    /// Runs one binary step: renders every (variant, repeat) prompt,
    /// dispatches them as a bounded batch, parses votes, and aggregates.
    fn run_step(
        &self,
        sample: &Sample,
        category: &Category,
        steps_done: u32,
        cost: &mut CostTracker,
        started: Instant,
    ) -> Result<(Vec<VoteRecord>, Decision), SampleError> {
        let policy = &self.options.policy;
        let mut requests = Vec::with_capacity(policy.votes_per_step() as usize);
        let mut meta = Vec::with_capacity(requests.capacity());
        for variant in &policy.variants {
            for ordinal in 1..=policy.votes_per_variant {
                let rendered = render_binary_prompt(
                    &self.templates,
                    *variant,
                    &self.schema.domain_description,
                    category,
                    &sample.text,
                    self.options.include_description,
                )
                .map_err(|err| {
                    self.sample_error(sample, steps_done, cost, started, err.to_string())
                })?;
                let temperature = if policy.votes_per_variant == 1 {
                    0.0
                } else {
                    self.options.sampled_temperature
                };
                let max_tokens = match variant {
                    PromptVariant::NoCot => self.options.max_tokens_direct,
                    PromptVariant::Cot => self.options.max_tokens_reasoning,
                };
                requests.push(CompletionRequest {
                    prompt: rendered.text,
                    max_tokens,
                    temperature,
                    // 0-based repeat index: keeps sampled repeats distinct
                    // and scripted runs order-independent.
                    seed: Some(u64::from(ordinal - 1)),
                });
                meta.push((*variant, ordinal));
            }
        }

        let results = self.llm.complete_batch(&requests);
        let mut votes = Vec::with_capacity(results.len());
        let mut first_error = None;
        for ((variant, ordinal), result) in meta.into_iter().zip(results) {
            match result {
                Ok(response) => {
                    cost.calls += 1;
                    cost.retries += u64::from(response.attempts.saturating_sub(1));
                    cost.simulated_ms += response.latency_ms;
                    votes.push(VoteRecord {
                        variant,
                        ordinal,
                        answer: parse_binary_answer(variant, &response.text),
                    });
                }
                Err(error) => {
                    cost.retries += u64::from(error.attempts().saturating_sub(1));
                    if first_error.is_none() {
                        first_error = Some(format!(
                            "category {:?} ({variant} vote {ordinal}): {error}",
                            category.id.as_str()
                        ));
                    }
                }
            }
        }
        if let Some(message) = first_error {
            return Err(self.sample_error(sample, steps_done, cost, started, message));
        }
        let decision = decide(policy, &votes).map_err(|err| {
            self.sample_error(
                sample,
                steps_done,
                cost,
                started,
                format!("internal vote-shape violation: {err}"),
            )
        })?;
        Ok((votes, decision))
    }

    /// Labels one sample. Walk modes step down the candidate list until
    /// an accept, a step-budget exhaustion, or the end of the list; the
    /// all-in-one mode asks its single prompt.
    pub fn label_sample(&self, sample: &Sample) -> SampleOutcome {
        if self.options.mode == RacMode::AllInOnePrompt {
            return self.label_sample_all_in_one(sample);
        }
        let started = Instant::now();
        let mut cost = CostTracker::default();
        let candidates = self.candidates(sample, &cost, started)?;
        let limit = match self.options.mode {
            RacMode::Truncated { max_steps } => (max_steps as usize).min(candidates.len()),
            _ => candidates.len(),
        };

        let mut trace: Vec<StepTrace> = Vec::new();
        let mut labeled: Option<CategoryId> = None;
        for (category_id, rank, similarity) in candidates.into_iter().take(limit) {
            let category = self
                .schema
                .category(&category_id)
                .expect("candidates come from the schema");
            let (votes, decision) =
                self.run_step(sample, category, trace.len() as u32, &mut cost, started)?;
            trace.push(StepTrace {
                category_id: category_id.clone(),
                retrieval_rank: rank,
                similarity,
                votes,
                decision,
            });
            if decision == Decision::Accept {
                labeled = Some(category_id);
                break;
            }
        }

        let outcome = match labeled {
            Some(category_id) => Outcome::Labeled {
                category_id,
                step_rank: trace.len() as u32,
            },
            None => Outcome::Abstained,
        };
        let llm_calls = trace.len() as u64 * self.options.policy.votes_per_step();
        debug_assert_eq!(llm_calls, cost.calls);
        let prediction = Prediction {
            sample_id: sample.id.clone(),
            outcome,
            trace,
            llm_calls,
            wall_ms: self.wall_ms(&cost, started),
        };
        debug_assert!(prediction.check_consistency().is_ok());
        Ok(prediction)
    }

    /// Labels one sample with the all-in-one baseline prompt. A resolved
    /// answer yields a single synthetic accept step carrying the raw
    /// completion; an unresolvable answer abstains with an empty trace.
    /// Costs exactly one completion either way.
    pub fn label_sample_all_in_one(&self, sample: &Sample) -> SampleOutcome {
        let started = Instant::now();
        let mut cost = CostTracker::default();
        let prompt = render_multiclass_prompt(
            &self.templates,
            &self.schema,
            &sample.text,
            self.options.include_description,
        )
        .map_err(|err| self.sample_error(sample, 0, &cost, started, err.to_string()))?;
        let request = CompletionRequest {
            prompt,
            max_tokens: self.options.max_tokens_direct,
            temperature: 0.0,
            seed: Some(0),
        };
        let response = match self.llm.complete(&request) {
            Ok(response) => response,
            Err(error) => {
                cost.retries += u64::from(error.attempts().saturating_sub(1));
                return Err(self.sample_error(sample, 0, &cost, started, error.to_string()));
            }
        };
        cost.calls = 1;
        cost.retries += u64::from(response.attempts.saturating_sub(1));
        cost.simulated_ms += response.latency_ms;

        let (outcome, trace) = match parse_multiclass_answer(&response.text, &self.schema) {
            Some(category_id) => (
                Outcome::Labeled {
                    category_id: category_id.clone(),
                    step_rank: 1,
                },
                vec![StepTrace {
                    category_id,
                    retrieval_rank: 1,
                    similarity: 0.0,
                    votes: vec![VoteRecord {
                        variant: PromptVariant::NoCot,
                        ordinal: 1,
                        answer: BinaryAnswer::new(
                            crate::types::AnswerKind::Yes,
                            response.text.clone(),
                        ),
                    }],
                    decision: Decision::Accept,
                }],
            ),
            None => (Outcome::Abstained, Vec::new()),
        };
        let prediction = Prediction {
            sample_id: sample.id.clone(),
            outcome,
            trace,
            llm_calls: 1,
            wall_ms: self.wall_ms(&cost, started),
        };
        debug_assert!(prediction.check_consistency().is_ok());
        Ok(prediction)
    }

    /// Labels a dataset with up to `parallelism` samples in flight.
    ///
    /// Samples in `skip` are excluded before the run (resume support).
    /// `on_result` sees every outcome in input order, as soon as it and
    /// all its predecessors are done — suitable for streaming a
    /// predictions file and checkpoint. A sink failure aborts the run.
    /// Per-sample failures never abort: they become `Err` outcomes.
    pub fn label_dataset(
        &self,
        samples: &[Sample],
        parallelism: usize,
        skip: &HashSet<SampleId>,
        mut on_result: impl FnMut(&SampleOutcome) -> std::io::Result<()> + Send,
    ) -> Result<DatasetRun, EngineError> {
        let to_run: Vec<&Sample> = samples.iter().filter(|s| !skip.contains(&s.id)).collect();
        let skipped = (samples.len() - to_run.len()) as u64;
        let workers = parallelism.max(1).min(to_run.len().max(1));

        let outcomes = if workers <= 1 {
            let mut outcomes = Vec::with_capacity(to_run.len());
            for sample in &to_run {
                let outcome = self.label_sample(sample);
                on_result(&outcome).map_err(EngineError::Sink)?;
                outcomes.push(outcome);
            }
            outcomes
        } else {
            self.label_dataset_parallel(&to_run, workers, &mut on_result)?
        };

        let rows = outcomes.iter().map(ledger_row).collect();
        Ok(DatasetRun {
            outcomes,
            ledger: RunLedger::from_rows(rows),
            skipped,
        })
    }

    fn label_dataset_parallel(
        &self,
        to_run: &[&Sample],
        workers: usize,
        on_result: &mut (impl FnMut(&SampleOutcome) -> std::io::Result<()> + Send),
    ) -> Result<Vec<SampleOutcome>, EngineError> {
        struct EmitState<'cb> {
            next_emit: usize,
            pending: BTreeMap<usize, SampleOutcome>,
            emitted: Vec<SampleOutcome>,
            sink_error: Option<std::io::Error>,
            on_result: &'cb mut (dyn FnMut(&SampleOutcome) -> std::io::Result<()> + Send),
        }

        let emit = Mutex::new(EmitState {
            next_emit: 0,
            pending: BTreeMap::new(),
            emitted: Vec::with_capacity(to_run.len()),
            sink_error: None,
            on_result,
        });
        let next = AtomicUsize::new(0);
        let abort = AtomicBool::new(false);

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    if abort.load(Ordering::Relaxed) {
                        break;
                    }
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    if index >= to_run.len() {
                        break;
                    }
                    let outcome = self.label_sample(to_run[index]);
                    let mut state = emit.lock().expect("emit lock poisoned");
                    state.pending.insert(index, outcome);
                    // Drain everything that is now contiguous, in order.
                    loop {
                        let key = state.next_emit;
                        let Some(ready) = state.pending.remove(&key) else {
                            break;
                        };
                        state.next_emit += 1;
                        if state.sink_error.is_none() {
                            if let Err(err) = (state.on_result)(&ready) {
                                state.sink_error = Some(err);
                                abort.store(true, Ordering::Relaxed);
                            }
                        }
                        state.emitted.push(ready);
                    }
                });
            }
        });

        let state = emit.into_inner().expect("emit lock poisoned");
        if let Some(err) = state.sink_error {
            return Err(EngineError::Sink(err));
        }
        debug_assert_eq!(state.emitted.len(), to_run.len());
        Ok(state.emitted)
    }

    /// Runs every benchmark pair as one binary step (same prompts and
    /// policy as a walk step) and scores per-class accuracy: a pair is
    /// correct when accept/reject matches its positive/negative role. Any
    /// failing pair aborts the benchmark. Pairs run with up to
    /// `parallelism` in flight.
    pub fn run_binary_benchmark(
        &self,
        benchmark: &BinaryBenchmark,
        parallelism: usize,
    ) -> Result<BenchmarkRun, EngineError> {
        struct PairTask<'a> {
            class_index: usize,
            category: &'a Category,
            sample: &'a Sample,
            positive: bool,
        }

        let mut tasks = Vec::new();
        for (class_index, class) in benchmark.per_category.iter().enumerate() {
            let category = self
                .schema
                .category(&class.category_id)
                .ok_or_else(|| EngineError::BenchmarkPair {
                    sample_id: String::new(),
                    message: format!(
                        "benchmark category {:?} is not in the schema",
                        class.category_id.as_str()
                    ),
                })?;
            for pair in &class.pairs {
                tasks.push(PairTask {
                    class_index,
                    category,
                    sample: &pair.sample,
                    positive: pair.positive,
                });
            }
        }

        // (class index, step was correct, cost) per finished pair.
        type PairOutcome = Result<(usize, bool, CostTracker), SampleError>;

        let started = Instant::now();
        let workers = parallelism.max(1).min(tasks.len().max(1));
        let next = AtomicUsize::new(0);
        let results: Mutex<Vec<Option<PairOutcome>>> =
            Mutex::new((0..tasks.len()).map(|_| None).collect());

        std::thread::scope(|scope| {
            for _ in 0..workers {
                scope.spawn(|| loop {
                    let index = next.fetch_add(1, Ordering::Relaxed);
                    if index >= tasks.len() {
                        break;
                    }
                    let task = &tasks[index];
                    let mut cost = CostTracker::default();
                    let outcome = self
                        .run_step(task.sample, task.category, 0, &mut cost, started)
                        .map(|(_, decision)| {
                            let correct = (decision == Decision::Accept) == task.positive;
                            (task.class_index, correct, cost)
                        });
                    results.lock().expect("results lock poisoned")[index] = Some(outcome);
                });
            }
        });

        let mut per_class: Vec<ClassBinaryOutcome> = benchmark
            .per_category
            .iter()
            .map(|class| ClassBinaryOutcome {
                category_id: class.category_id.clone(),
                correct: 0,
                total: 0,
            })
            .collect();
        let (mut llm_calls, mut retries, mut simulated_ms) = (0u64, 0u64, 0u64);
        for slot in results.into_inner().expect("results lock poisoned") {
            let (class_index, correct, cost) =
                slot.expect("every task ran").map_err(|err| EngineError::BenchmarkPair {
                    sample_id: err.sample_id.as_str().to_owned(),
                    message: err.message.clone(),
                })?;
            per_class[class_index].total += 1;
            per_class[class_index].correct += u64::from(correct);
            llm_calls += cost.calls;
            retries += cost.retries;
            simulated_ms += cost.simulated_ms;
        }
        let report = crate::eval::compute_binary_accuracy(&per_class).map_err(|err| {
            EngineError::BenchmarkPair {
                sample_id: String::new(),
                message: err.to_string(),
            }
        })?;
        let wall_ms = match self.options.wall_clock {
            WallClock::System => started.elapsed().as_millis() as u64,
            WallClock::Simulated => simulated_ms,
        };
        Ok(BenchmarkRun {
            report,
            llm_calls,
            retries,
            wall_ms,
        })
    }
}

fn embed_query(
    embedder: &dyn EmbeddingProvider,
    text: &str,
) -> Result<crate::retrieval::EmbeddingVector, RetrievalError> {
    let mut vectors = embedder
        .embed(&[text])
        .map_err(RetrievalError::QueryEmbedding)?;
    match vectors.pop() {
        Some(vector) if vectors.is_empty() => Ok(vector),
        _ => Err(RetrievalError::QueryEmbedding(
            crate::retrieval::EmbedError::Malformed {
                message: "embedder returned wrong vector count".to_owned(),
            },
        )),
    }
}

/// RNG for per-sample candidate shuffles: a pure function of the run seed
/// and the sample id, so order never depends on scheduling.
fn per_sample_rng(seed: u64, sample_id: &SampleId) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(sample_id.as_str().as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}
