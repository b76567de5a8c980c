//! Category retrieval: embedding index, cosine ranking, and MRR@k.
//!
//! A category is embedded once per run from its chosen representation
//! (label, description, or `label: description`). Samples are embedded
//! verbatim and ranked against every category by cosine similarity,
//! producing the candidate order the engine walks.

pub mod embedder;
pub mod index_io;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::{Category, CategoryId, LabelSchema};

pub use embedder::{
    EmbedError, EmbeddingProvider, FileVectorProvider, HttpEmbedder, HttpEmbedderConfig,
};
pub use index_io::{export_index_text, load_index, load_index_file, save_index, save_index_file};

/// A finite, non-empty embedding. Construction validates, so every vector
/// in an index or query position is usable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f32>", into = "Vec<f32>")]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    pub fn new(values: Vec<f32>) -> Result<Self, RetrievalError> {
        if values.is_empty() {
            return Err(RetrievalError::EmptyVector);
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(RetrievalError::NonFiniteComponent { index });
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    fn norm_squared(&self) -> f64 {
        self.0.iter().map(|v| f64::from(*v) * f64::from(*v)).sum()
    }
}

impl TryFrom<Vec<f32>> for EmbeddingVector {
    type Error = RetrievalError;

    fn try_from(values: Vec<f32>) -> Result<Self, Self::Error> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f32> {
    fn from(vector: EmbeddingVector) -> Self {
        vector.0
    }
}

/// Which category representation gets embedded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReprMode {
    /// Label only.
    #[serde(rename = "L")]
    L,
    /// Description only.
    #[serde(rename = "D")]
    D,
    /// `label: description`.
    #[serde(rename = "L+D")]
    LplusD,
}

impl ReprMode {
    pub(crate) fn code(self) -> u8 {
        match self {
            Self::L => 0,
            Self::D => 1,
            Self::LplusD => 2,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Self::L),
            1 => Some(Self::D),
            2 => Some(Self::LplusD),
            _ => None,
        }
    }
}

impl fmt::Display for ReprMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::L => "L",
            Self::D => "D",
            Self::LplusD => "L+D",
        })
    }
}

impl FromStr for ReprMode {
    type Err = RetrievalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L" => Ok(Self::L),
            "D" => Ok(Self::D),
            "L+D" => Ok(Self::LplusD),
            other => Err(RetrievalError::UnknownReprMode {
                value: other.to_owned(),
            }),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error("embedding vector is empty")]
    EmptyVector,
    #[error("embedding vector component {index} is not finite")]
    NonFiniteComponent { index: usize },
    #[error("unknown representation mode {value:?} (expected L, D, or L+D)")]
    UnknownReprMode { value: String },
    #[error("category {category_id:?} has no name to embed")]
    MissingName { category_id: String },
    #[error("category {category_id:?} has no description, required by mode {mode}")]
    MissingDescription { category_id: String, mode: ReprMode },
    #[error("failed to embed category {category_id:?}: {source}")]
    Embedding {
        category_id: String,
        source: EmbedError,
    },
    #[error("failed to embed query text: {0}")]
    QueryEmbedding(EmbedError),
    #[error("vector dimension {actual} does not match index dimension {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("cosine similarity undefined for a zero-norm vector")]
    ZeroNorm,
    #[error("index entry {category_id:?} has a zero-norm vector")]
    ZeroNormEntry { category_id: String },
    #[error("index has no entries")]
    EmptyIndex,
    #[error("index has duplicate entry for category {category_id:?}")]
    DuplicateEntry { category_id: String },
    #[error("rank list is empty, MRR undefined")]
    EmptyRanks,
    #[error("MRR cutoff k must be at least 1")]
    ZeroK,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("index file invalid: {message}")]
    Format { message: String },
}

/// The text that represents `category` under `mode`.
///
/// `L` uses the name, `D` the description, `L+D` joins them as
/// `name: description`. Modes that read the description reject categories
/// without one.
pub fn render_category_text(category: &Category, mode: ReprMode) -> Result<String, RetrievalError> {
    if category.name.is_empty() {
        return Err(RetrievalError::MissingName {
            category_id: category.id.as_str().to_owned(),
        });
    }
    match mode {
        ReprMode::L => Ok(category.name.clone()),
        ReprMode::D | ReprMode::LplusD if category.description.is_empty() => {
            Err(RetrievalError::MissingDescription {
                category_id: category.id.as_str().to_owned(),
                mode,
            })
        }
        ReprMode::D => Ok(category.description.clone()),
        ReprMode::LplusD => Ok(format!("{}: {}", category.name, category.description)),
    }
}

/// One embedded category.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub category_id: CategoryId,
    pub vector: EmbeddingVector,
}

/// Embedded categories of one schema under one representation mode and
/// one embedder. Entry order follows schema order; ranking ties are
/// broken by category id, not entry order.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryIndex {
    repr_mode: ReprMode,
    embedder_id: String,
    dim: usize,
    entries: Vec<IndexEntry>,
}

impl CategoryIndex {
    /// Validates dimensions (uniform), ids (unique), and norms (non-zero,
    /// so similarity is defined for every entry).
    pub fn new(
        repr_mode: ReprMode,
        embedder_id: impl Into<String>,
        entries: Vec<IndexEntry>,
    ) -> Result<Self, RetrievalError> {
        let first = entries.first().ok_or(RetrievalError::EmptyIndex)?;
        let dim = first.vector.dim();
        let mut seen = HashSet::new();
        for entry in &entries {
            if entry.vector.dim() != dim {
                return Err(RetrievalError::DimensionMismatch {
                    expected: dim,
                    actual: entry.vector.dim(),
                });
            }
            if entry.vector.norm_squared() == 0.0 {
                return Err(RetrievalError::ZeroNormEntry {
                    category_id: entry.category_id.as_str().to_owned(),
                });
            }
            if !seen.insert(entry.category_id.clone()) {
                return Err(RetrievalError::DuplicateEntry {
                    category_id: entry.category_id.as_str().to_owned(),
                });
            }
        }
        Ok(Self {
            repr_mode,
            embedder_id: embedder_id.into(),
            dim,
            entries,
        })
    }

    pub fn repr_mode(&self) -> ReprMode {
        self.repr_mode
    }

    pub fn embedder_id(&self) -> &str {
        &self.embedder_id
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks the index covers exactly the schema's category ids.
    pub fn matches_schema(&self, schema: &LabelSchema) -> bool {
        self.entries.len() == schema.categories.len()
            && schema
                .categories
                .iter()
                .zip(&self.entries)
                .all(|(category, entry)| category.id == entry.category_id)
    }
}

/// Embeds every category of `schema` under `mode`, one embedding call per
/// category so failures name the category that caused them.
pub fn build_index(
    schema: &LabelSchema,
    embedder: &dyn EmbeddingProvider,
    mode: ReprMode,
) -> Result<CategoryIndex, RetrievalError> {
    let mut entries = Vec::with_capacity(schema.categories.len());
    for category in &schema.categories {
        let text = render_category_text(category, mode)?;
        let mut vectors =
            embedder
                .embed(&[&text])
                .map_err(|source| RetrievalError::Embedding {
                    category_id: category.id.as_str().to_owned(),
                    source,
                })?;
        let vector = match vectors.pop() {
            Some(vector) if vectors.is_empty() => vector,
            _ => {
                return Err(RetrievalError::Embedding {
                    category_id: category.id.as_str().to_owned(),
                    source: EmbedError::Malformed {
                        message: "embedder returned wrong vector count".to_owned(),
                    },
                })
            }
        };
        entries.push(IndexEntry {
            category_id: category.id.clone(),
            vector,
        });
    }
    CategoryIndex::new(mode, embedder.embedder_id(), entries)
}

/// Cosine similarity in f64, defined only for equal-dimension vectors of
/// non-zero norm.
pub fn cosine_similarity(a: &EmbeddingVector, b: &EmbeddingVector) -> Result<f64, RetrievalError> {
    if a.dim() != b.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: a.dim(),
            actual: b.dim(),
        });
    }
    let mut dot = 0.0f64;
    for (x, y) in a.values().iter().zip(b.values()) {
        dot += f64::from(*x) * f64::from(*y);
    }
    let norm_a = a.norm_squared();
    let norm_b = b.norm_squared();
    if norm_a == 0.0 || norm_b == 0.0 {
        return Err(RetrievalError::ZeroNorm);
    }
    Ok(dot / (norm_a.sqrt() * norm_b.sqrt()))
}

/// One ranked candidate: category plus its similarity to the query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedCandidate {
    pub category_id: CategoryId,
    pub similarity: f64,
}

/// Full descending-similarity ordering of an index against one query.
/// Contains every index entry exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    candidates: Vec<RankedCandidate>,
}

impl RankedList {
    pub fn candidates(&self) -> &[RankedCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    /// 1-based rank of `id`, or `None` when absent.
    pub fn rank_of(&self, id: &CategoryId) -> Option<usize> {
        self.candidates
            .iter()
            .position(|c| &c.category_id == id)
            .map(|p| p + 1)
    }
}

/// Ranks every index entry against `query` by descending cosine
/// similarity. Equal similarities order by ascending category id, so the
/// ordering is fully deterministic regardless of schema order.
pub fn rank_categories(
    index: &CategoryIndex,
    query: &EmbeddingVector,
) -> Result<RankedList, RetrievalError> {
    if query.dim() != index.dim() {
        return Err(RetrievalError::DimensionMismatch {
            expected: index.dim(),
            actual: query.dim(),
        });
    }
    let mut candidates = Vec::with_capacity(index.entries.len());
    for entry in &index.entries {
        let similarity = cosine_similarity(query, &entry.vector)?;
        candidates.push(RankedCandidate {
            category_id: entry.category_id.clone(),
            similarity,
        });
    }
    candidates.sort_by(|a, b| {
        b.similarity
            .total_cmp(&a.similarity)
            .then_with(|| a.category_id.cmp(&b.category_id))
    });
    Ok(RankedList { candidates })
}

/// Mean reciprocal rank at cutoff `k` over per-sample gold ranks.
///
/// A sample whose gold category ranked within `k` contributes
/// `1 / rank`; deeper or absent golds contribute 0. The mean is over all
/// samples, so absent golds still count in the denominator.
pub fn mrr_at_k(gold_ranks: &[Option<usize>], k: usize) -> Result<f64, RetrievalError> {
    if gold_ranks.is_empty() {
        return Err(RetrievalError::EmptyRanks);
    }
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    let sum: f64 = gold_ranks
        .iter()
        .map(|rank| match rank {
            Some(rank) if *rank >= 1 && *rank <= k => 1.0 / *rank as f64,
            _ => 0.0,
        })
        .sum();
    Ok(sum / gold_ranks.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector(values: &[f32]) -> EmbeddingVector {
        EmbeddingVector::new(values.to_vec()).unwrap()
    }

    #[test]
    fn cosine_of_known_vectors() {
        let a = vector(&[1.0, 2.0, 3.0]);
        let b = vector(&[4.0, 5.0, 6.0]);
        let got = cosine_similarity(&a, &b).unwrap();
        // 32 / sqrt(14 * 77) evaluated at 60 digits is
        // 0.97463184619707627107857…; the f64 evaluation lands one ulp
        // below the correctly rounded double. Freeze the deterministic
        // result exactly and bound its distance from the true value.
        assert_eq!(got, 0.9746318461970762);
        assert!((got - 0.9746318461970763_f64).abs() <= f64::EPSILON);
    }

    #[test]
    fn cosine_rejects_zero_and_mismatched() {
        let a = vector(&[0.0, 0.0]);
        let b = vector(&[1.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&a, &b),
            Err(RetrievalError::ZeroNorm)
        ));
        let c = vector(&[1.0, 0.0, 0.0]);
        assert!(matches!(
            cosine_similarity(&b, &c),
            Err(RetrievalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn vectors_must_be_finite_and_non_empty() {
        assert!(matches!(
            EmbeddingVector::new(vec![]),
            Err(RetrievalError::EmptyVector)
        ));
        assert!(matches!(
            EmbeddingVector::new(vec![1.0, f32::NAN]),
            Err(RetrievalError::NonFiniteComponent { index: 1 })
        ));
    }

    #[test]
    fn representation_text_per_mode() {
        let category = Category::new("c", "card arrival", "Card delivery questions.");
        assert_eq!(render_category_text(&category, ReprMode::L).unwrap(), "card arrival");
        assert_eq!(
            render_category_text(&category, ReprMode::D).unwrap(),
            "Card delivery questions."
        );
        assert_eq!(
            render_category_text(&category, ReprMode::LplusD).unwrap(),
            "card arrival: Card delivery questions."
        );
        let bare = Category::new("c", "card arrival", "");
        assert!(render_category_text(&bare, ReprMode::L).is_ok());
        assert!(matches!(
            render_category_text(&bare, ReprMode::LplusD),
            Err(RetrievalError::MissingDescription { .. })
        ));
    }

    #[test]
    fn ranking_sorts_descending_with_index_order_ties() {
        let index = CategoryIndex::new(
            ReprMode::L,
            "test",
            vec![
                IndexEntry {
                    category_id: "a".into(),
                    vector: vector(&[1.0, 0.0]),
                },
                IndexEntry {
                    category_id: "b".into(),
                    vector: vector(&[0.0, 1.0]),
                },
                IndexEntry {
                    category_id: "c".into(),
                    vector: vector(&[2.0, 0.0]), // same direction as "a"
                },
            ],
        )
        .unwrap();
        let ranked = rank_categories(&index, &vector(&[1.0, 0.0])).unwrap();
        let order: Vec<&str> = ranked
            .candidates()
            .iter()
            .map(|c| c.category_id.as_str())
            .collect();
        // a and c tie at similarity 1; index order keeps a first.
        assert_eq!(order, vec!["a", "c", "b"]);
        assert_eq!(ranked.rank_of(&"b".into()), Some(3));
        assert_eq!(ranked.rank_of(&"missing".into()), None);
    }

    #[test]
    fn mrr_matches_hand_computation() {
        let ranks = [Some(1), Some(2), Some(4)];
        assert_eq!(mrr_at_k(&ranks, 4).unwrap(), 0.5833333333333334);
        // Cutoff 1 only counts the rank-1 hit.
        assert_eq!(mrr_at_k(&ranks, 1).unwrap(), 1.0 / 3.0);
        // Absent gold contributes zero but stays in the denominator.
        assert_eq!(mrr_at_k(&[Some(1), None], 5).unwrap(), 0.5);
        assert!(matches!(mrr_at_k(&[], 5), Err(RetrievalError::EmptyRanks)));
        assert!(matches!(
            mrr_at_k(&[Some(1)], 0),
            Err(RetrievalError::ZeroK)
        ));
    }
}
