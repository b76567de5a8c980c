//! Shared domain types: label schemas, samples, predictions, and the
//! building blocks of a prediction trace.
//!
//! Everything here is plain data with stable serde shapes. Schema and
//! dataset files are the inputs of a run; prediction files are the output.
//! Datasets and predictions are line-delimited JSON (one object per line);
//! schemas are a single JSON document.

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

/// Identifier of a category within a label schema.
///
/// Ids are opaque strings; uniqueness within a schema is enforced by
/// [`validate_schema`]. Display names live on [`Category::name`] and may
/// collide, ids may not.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CategoryId(String);

/// Identifier of a sample within a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleId(String);

macro_rules! string_id {
    ($name:ident) => {
        impl $name {
            pub fn new(id: impl Into<String>) -> Self {
                Self(id.into())
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl From<&str> for $name {
            fn from(id: &str) -> Self {
                Self(id.to_owned())
            }
        }

        impl From<String> for $name {
            fn from(id: String) -> Self {
                Self(id)
            }
        }
    };
}

string_id!(CategoryId);
string_id!(SampleId);

/// One category of a label schema.
///
/// `description` may be empty: label-only runs never read it, and the
/// retrieval layer rejects empty descriptions only for representation
/// modes that need them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    pub name: String,
    #[serde(default)]
    pub description: String,
}

impl Category {
    pub fn new(
        id: impl Into<CategoryId>,
        name: impl Into<String>,
        description: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            name: name.into(),
            description: description.into(),
        }
    }

    pub fn has_description(&self) -> bool {
        !self.description.is_empty()
    }
}

/// A label schema: the domain blurb plus the full category list.
///
/// The domain description is inserted into every prompt, so it should read
/// as a noun phrase describing one sample (for example
/// `"customer support query"`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSchema {
    pub domain_description: String,
    pub categories: Vec<Category>,
}

impl LabelSchema {
    pub fn new(domain_description: impl Into<String>, categories: Vec<Category>) -> Self {
        Self {
            domain_description: domain_description.into(),
            categories,
        }
    }

    pub fn category(&self, id: &CategoryId) -> Option<&Category> {
        self.categories.iter().find(|c| &c.id == id)
    }

    pub fn contains(&self, id: &CategoryId) -> bool {
        self.category(id).is_some()
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }
}

/// A violation found by [`validate_schema`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SchemaViolation {
    /// Classification needs at least two categories to choose between.
    TooFewCategories { count: usize },
    /// Category at `position` (0-based) has an empty id.
    EmptyId { position: usize },
    /// The same id appears on more than one category.
    DuplicateId { id: CategoryId },
    /// Category `id` has an empty display name.
    EmptyName { id: CategoryId },
}

impl fmt::Display for SchemaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::TooFewCategories { count } => {
                write!(f, "schema has {count} categories, need at least 2")
            }
            Self::EmptyId { position } => {
                write!(f, "category at position {position} has an empty id")
            }
            Self::DuplicateId { id } => write!(f, "duplicate category id {id:?}", id = id.as_str()),
            Self::EmptyName { id } => {
                write!(f, "category {id:?} has an empty name", id = id.as_str())
            }
        }
    }
}

/// Checks schema invariants and returns every violation found.
///
/// Valid means: at least two categories, all ids non-empty and unique, all
/// names non-empty. Empty descriptions are allowed. Duplicate display
/// names are allowed (ids disambiguate).
pub fn validate_schema(schema: &LabelSchema) -> Vec<SchemaViolation> {
    let mut violations = Vec::new();
    if schema.categories.len() < 2 {
        violations.push(SchemaViolation::TooFewCategories {
            count: schema.categories.len(),
        });
    }
    let mut seen = HashSet::new();
    for (position, category) in schema.categories.iter().enumerate() {
        if category.id.as_str().is_empty() {
            violations.push(SchemaViolation::EmptyId { position });
            continue;
        }
        if !seen.insert(category.id.clone()) {
            violations.push(SchemaViolation::DuplicateId {
                id: category.id.clone(),
            });
        }
        if category.name.is_empty() {
            violations.push(SchemaViolation::EmptyName {
                id: category.id.clone(),
            });
        }
    }
    violations
}

/// One text sample to classify. `gold` is the reference label, present only
/// in evaluation datasets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub id: SampleId,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<CategoryId>,
}

impl Sample {
    pub fn new(id: impl Into<SampleId>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            text: text.into(),
            gold: None,
        }
    }

    pub fn with_gold(mut self, gold: impl Into<CategoryId>) -> Self {
        self.gold = Some(gold.into());
        self
    }
}

/// The two binary prompt styles: direct answer, or reasoning first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptVariant {
    NoCot,
    Cot,
}

impl fmt::Display for PromptVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::NoCot => "no_cot",
            Self::Cot => "cot",
        })
    }
}

/// What a binary completion parsed to. `Unparseable` is a first-class
/// value, not an error: downstream aggregation treats it as a no.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerKind {
    Yes,
    No,
    Unparseable,
}

/// A parsed binary answer plus the raw completion it came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAnswer {
    pub kind: AnswerKind,
    pub raw: String,
}

impl BinaryAnswer {
    pub fn new(kind: AnswerKind, raw: impl Into<String>) -> Self {
        Self {
            kind,
            raw: raw.into(),
        }
    }
}

/// One model vote within a step: which prompt variant produced it, the
/// 1-based repeat ordinal under that variant, and the parsed answer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub variant: PromptVariant,
    pub ordinal: u32,
    pub answer: BinaryAnswer,
}

/// Outcome of aggregating one step's votes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Accept,
    Reject,
}

/// Record of one step of a sample's walk down the ranked category list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepTrace {
    pub category_id: CategoryId,
    /// 1-based position of this category in the ranked candidate list.
    pub retrieval_rank: u32,
    /// Cosine similarity between sample and category (0.0 for orderings
    /// that bypass retrieval).
    pub similarity: f64,
    pub votes: Vec<VoteRecord>,
    pub decision: Decision,
}

/// Terminal outcome for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Labeled {
        category_id: CategoryId,
        /// 1-based step at which the accept happened; equals the number of
        /// binary steps taken.
        step_rank: u32,
    },
    Abstained,
}

/// A finished prediction for one sample.
///
/// `llm_calls` counts logical completions (steps x variants x votes),
/// excluding transport retries. `wall_ms` is wall time under the engine's
/// clock; runs against a simulated clock make it deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub sample_id: SampleId,
    pub outcome: Outcome,
    pub trace: Vec<StepTrace>,
    pub llm_calls: u64,
    pub wall_ms: u64,
}

/// Violation of the internal consistency rules of a [`Prediction`].
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PredictionInconsistency {
    #[error("labeled at step {step_rank} but trace has {trace_len} entries")]
    TraceLength { step_rank: u32, trace_len: usize },
    #[error("labeled at step {step_rank} but that step's decision is not accept")]
    AcceptMissing { step_rank: u32 },
    #[error("labeled category {label:?} does not match accepting step's {step:?}")]
    CategoryMismatch { label: String, step: String },
    #[error("step {index} precedes the accept but is not a reject")]
    EarlyAccept { index: usize },
    #[error("abstained prediction contains an accept at step {index}")]
    AbstainedAccept { index: usize },
    #[error("retrieval ranks are not strictly increasing at step {index}")]
    RankOrder { index: usize },
}

impl Prediction {
    /// Checks the outcome/trace consistency rules:
    ///
    /// * labeled at step `r` implies exactly `r` trace entries, entry `r`
    ///   is an accept for the labeled category, and every earlier entry is
    ///   a reject;
    /// * abstained implies every trace entry is a reject;
    /// * retrieval ranks are strictly increasing along the trace.
    pub fn check_consistency(&self) -> Result<(), PredictionInconsistency> {
        for (index, window) in self.trace.windows(2).enumerate() {
            if window[1].retrieval_rank <= window[0].retrieval_rank {
                return Err(PredictionInconsistency::RankOrder { index: index + 1 });
            }
        }
        match &self.outcome {
            Outcome::Labeled {
                category_id,
                step_rank,
            } => {
                let step_rank = *step_rank;
                if self.trace.len() != step_rank as usize {
                    return Err(PredictionInconsistency::TraceLength {
                        step_rank,
                        trace_len: self.trace.len(),
                    });
                }
                let last = match self.trace.last() {
                    Some(last) => last,
                    None => return Err(PredictionInconsistency::TraceLength { step_rank, trace_len: 0 }),
                };
                if last.decision != Decision::Accept {
                    return Err(PredictionInconsistency::AcceptMissing { step_rank });
                }
                if &last.category_id != category_id {
                    return Err(PredictionInconsistency::CategoryMismatch {
                        label: category_id.as_str().to_owned(),
                        step: last.category_id.as_str().to_owned(),
                    });
                }
                for (index, step) in self.trace[..self.trace.len() - 1].iter().enumerate() {
                    if step.decision != Decision::Reject {
                        return Err(PredictionInconsistency::EarlyAccept { index });
                    }
                }
            }
            Outcome::Abstained => {
                for (index, step) in self.trace.iter().enumerate() {
                    if step.decision != Decision::Reject {
                        return Err(PredictionInconsistency::AbstainedAccept { index });
                    }
                }
            }
        }
        Ok(())
    }

    /// Category id when labeled, `None` when abstained.
    pub fn label(&self) -> Option<&CategoryId> {
        match &self.outcome {
            Outcome::Labeled { category_id, .. } => Some(category_id),
            Outcome::Abstained => None,
        }
    }
}

/// Errors from loading or writing the file formats owned by this module.
#[derive(Debug, thiserror::Error)]
pub enum TypesError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: invalid json: {source}")]
    JsonLine {
        line: usize,
        source: serde_json::Error,
    },
    #[error("invalid json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("schema invalid: {}", format_violations(.0))]
    InvalidSchema(Vec<SchemaViolation>),
    #[error("line {line}: sample {id:?} has empty text")]
    EmptySampleText { line: usize, id: String },
    #[error("line {line}: empty sample id")]
    EmptySampleId { line: usize },
    #[error("line {line}: duplicate sample id {id:?}")]
    DuplicateSampleId { line: usize, id: String },
    #[error("sample {sample_id:?} has gold label {gold:?} not present in the schema")]
    GoldNotInSchema { sample_id: String, gold: String },
}

fn format_violations(violations: &[SchemaViolation]) -> String {
    violations
        .iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

/// Parses and validates a schema document. All violations are reported at
/// once rather than only the first.
pub fn parse_schema(json: &str) -> Result<LabelSchema, TypesError> {
    let schema: LabelSchema = serde_json::from_str(json)?;
    let violations = validate_schema(&schema);
    if violations.is_empty() {
        Ok(schema)
    } else {
        Err(TypesError::InvalidSchema(violations))
    }
}

pub fn read_schema_file(path: &Path) -> Result<LabelSchema, TypesError> {
    parse_schema(&std::fs::read_to_string(path)?)
}

pub fn write_schema_file(path: &Path, schema: &LabelSchema) -> Result<(), TypesError> {
    let mut json = serde_json::to_string_pretty(schema)?;
    json.push('\n');
    std::fs::write(path, json)?;
    Ok(())
}

/// Reads a line-delimited dataset, enforcing non-empty unique ids and
/// non-empty text. Blank lines are skipped.
pub fn read_samples<R: BufRead>(reader: R) -> Result<Vec<Sample>, TypesError> {
    let mut samples = Vec::new();
    let mut seen = HashSet::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let number = index + 1;
        let sample: Sample = serde_json::from_str(&line)
            .map_err(|source| TypesError::JsonLine { line: number, source })?;
        if sample.id.as_str().is_empty() {
            return Err(TypesError::EmptySampleId { line: number });
        }
        if sample.text.is_empty() {
            return Err(TypesError::EmptySampleText {
                line: number,
                id: sample.id.as_str().to_owned(),
            });
        }
        if !seen.insert(sample.id.clone()) {
            return Err(TypesError::DuplicateSampleId {
                line: number,
                id: sample.id.as_str().to_owned(),
            });
        }
        samples.push(sample);
    }
    Ok(samples)
}

pub fn read_samples_file(path: &Path) -> Result<Vec<Sample>, TypesError> {
    read_samples(BufReader::new(File::open(path)?))
}

/// Checks that every gold label present names a schema category.
pub fn validate_gold_labels(samples: &[Sample], schema: &LabelSchema) -> Result<(), TypesError> {
    for sample in samples {
        if let Some(gold) = &sample.gold {
            if !schema.contains(gold) {
                return Err(TypesError::GoldNotInSchema {
                    sample_id: sample.id.as_str().to_owned(),
                    gold: gold.as_str().to_owned(),
                });
            }
        }
    }
    Ok(())
}

/// Serializes one prediction as a single JSON line (no trailing newline).
pub fn prediction_to_json_line(prediction: &Prediction) -> Result<String, TypesError> {
    Ok(serde_json::to_string(prediction)?)
}

/// Reads a line-delimited prediction file, checking each prediction's
/// internal consistency.
pub fn read_predictions<R: BufRead>(reader: R) -> Result<Vec<Prediction>, TypesError> {
    let mut predictions = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let number = index + 1;
        let prediction: Prediction = serde_json::from_str(&line)
            .map_err(|source| TypesError::JsonLine { line: number, source })?;
        prediction
            .check_consistency()
            .map_err(|err| TypesError::JsonLine {
                line: number,
                source: serde::de::Error::custom(err.to_string()),
            })?;
        predictions.push(prediction);
    }
    Ok(predictions)
}

pub fn read_predictions_file(path: &Path) -> Result<Vec<Prediction>, TypesError> {
    read_predictions(BufReader::new(File::open(path)?))
}

pub fn write_predictions_file(path: &Path, predictions: &[Prediction]) -> Result<(), TypesError> {
    let mut writer = BufWriter::new(File::create(path)?);
    for prediction in predictions {
        writeln!(writer, "{}", prediction_to_json_line(prediction)?)?;
    }
    writer.flush()?;
    Ok(())
}
