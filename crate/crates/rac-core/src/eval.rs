//! Evaluation: multiclass metrics with abstention, macro binary accuracy,
//! balanced binary benchmark construction, and distillation export.
//!
//! Abstentions never enter F1: they are excluded from the labeled subset
//! and surface through `coverage` instead. A run that labels nothing has
//! no defined F1 and reports an error that still carries its coverage.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::io::Write;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::types::{CategoryId, LabelSchema, Prediction, Sample, SampleId};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("no predictions to evaluate")]
    NoPredictions,
    #[error("none of the predictions correspond to a sample with a gold label")]
    NothingToEvaluate,
    #[error(
        "all {n_evaluated} evaluated predictions abstained (coverage 0); F1 is undefined"
    )]
    NoLabeledPredictions { n_evaluated: u64 },
    #[error("prediction references unknown sample {sample_id:?}")]
    UnknownSample { sample_id: String },
    #[error("duplicate prediction for sample {sample_id:?}")]
    DuplicatePrediction { sample_id: String },
    #[error("sample {sample_id:?} has gold label {gold:?} not in the schema")]
    GoldNotInSchema { sample_id: String, gold: String },
    #[error("prediction for sample {sample_id:?} names category {category_id:?} not in the schema")]
    PredictedNotInSchema {
        sample_id: String,
        category_id: String,
    },
    #[error("binary accuracy needs at least one class")]
    NoClasses,
    #[error("class {category_id:?} has zero trials, accuracy undefined")]
    ClassWithoutTrials { category_id: String },
    #[error("class {category_id:?} reports {correct} correct out of {total} trials")]
    InvalidCounts {
        category_id: String,
        correct: u64,
        total: u64,
    },
    #[error("no samples with gold labels to build a benchmark from")]
    NoGoldLabels,
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization: {0}")]
    Json(#[from] serde_json::Error),
}

/// Which classes the macro average runs over.
///
/// `GoldClasses` averages over classes that actually occur in the gold
/// labels of the evaluated samples — absent classes cannot score and
/// would drag the mean down artificially. `AllSchemaClasses` averages
/// over the whole schema, counting absent classes as F1 = 0; useful when
/// comparing runs whose evaluated slices differ.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MacroAveraging {
    GoldClasses,
    AllSchemaClasses,
}

impl fmt::Display for MacroAveraging {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::GoldClasses => "gold_classes",
            Self::AllSchemaClasses => "all_schema_classes",
        })
    }
}

/// Per-class confusion counts and scores over the labeled subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub category_id: CategoryId,
    /// Gold occurrences among evaluated samples (labeled or not).
    pub support: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Metrics over one prediction file against one gold dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Predictions whose sample carries a gold label.
    pub n_evaluated: u64,
    /// Evaluated predictions that labeled (did not abstain).
    pub n_labeled: u64,
    /// `n_labeled / n_evaluated`.
    pub coverage: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub macro_over: MacroAveraging,
    pub per_class: Vec<ClassMetrics>,
}

fn f1_from_counts(tp: u64, fp: u64, fn_: u64) -> (f64, f64, f64) {
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    let recall = if tp + fn_ == 0 {
        0.0
    } else {
        tp as f64 / (tp + fn_) as f64
    };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

/// Computes coverage, micro F1, macro F1, and per-class scores.
///
/// Evaluated means: the prediction's sample exists and carries a gold
/// label. Predictions for gold-less samples are ignored. Abstentions
/// count toward `n_evaluated` but are excluded from every F1. Micro F1
/// pools confusion counts over the labeled subset; macro F1 averages
/// per-class F1 over the class set picked by `macro_over`, scoring 0 for
/// classes with no true positives.
pub fn compute_multiclass_metrics(
    predictions: &[Prediction],
    samples: &[Sample],
    schema: &LabelSchema,
    macro_over: MacroAveraging,
) -> Result<MetricsReport, EvalError> {
    if predictions.is_empty() {
        return Err(EvalError::NoPredictions);
    }
    let mut gold_by_id: HashMap<&SampleId, Option<&CategoryId>> = HashMap::new();
    for sample in samples {
        if let Some(gold) = &sample.gold {
            if !schema.contains(gold) {
                return Err(EvalError::GoldNotInSchema {
                    sample_id: sample.id.as_str().to_owned(),
                    gold: gold.as_str().to_owned(),
                });
            }
        }
        gold_by_id.insert(&sample.id, sample.gold.as_ref());
    }

    let mut seen: HashSet<&SampleId> = HashSet::new();
    let mut n_evaluated = 0u64;
    let mut n_labeled = 0u64;
    let mut tp: HashMap<&CategoryId, u64> = HashMap::new();
    let mut fp: HashMap<&CategoryId, u64> = HashMap::new();
    let mut fn_: HashMap<&CategoryId, u64> = HashMap::new();
    let mut support: HashMap<&CategoryId, u64> = HashMap::new();

    for prediction in predictions {
        if !seen.insert(&prediction.sample_id) {
            return Err(EvalError::DuplicatePrediction {
                sample_id: prediction.sample_id.as_str().to_owned(),
            });
        }
        let gold = gold_by_id
            .get(&prediction.sample_id)
            .ok_or_else(|| EvalError::UnknownSample {
                sample_id: prediction.sample_id.as_str().to_owned(),
            })?;
        let gold = match gold {
            Some(gold) => *gold,
            None => continue, // sample has no gold label; nothing to score
        };
        n_evaluated += 1;
        *support.entry(gold).or_insert(0) += 1;
        let predicted = match prediction.label() {
            Some(predicted) => predicted,
            None => continue, // abstention: counts for coverage only
        };
        if !schema.contains(predicted) {
            return Err(EvalError::PredictedNotInSchema {
                sample_id: prediction.sample_id.as_str().to_owned(),
                category_id: predicted.as_str().to_owned(),
            });
        }
        n_labeled += 1;
        if predicted == gold {
            *tp.entry(gold).or_insert(0) += 1;
        } else {
            *fp.entry(predicted).or_insert(0) += 1;
            *fn_.entry(gold).or_insert(0) += 1;
        }
    }

    if n_evaluated == 0 {
        return Err(EvalError::NothingToEvaluate);
    }
    if n_labeled == 0 {
        return Err(EvalError::NoLabeledPredictions { n_evaluated });
    }
    let coverage = n_labeled as f64 / n_evaluated as f64;

    let micro_tp: u64 = tp.values().sum();
    let micro_fp: u64 = fp.values().sum();
    let micro_fn: u64 = fn_.values().sum();
    let (_, _, micro_f1) = f1_from_counts(micro_tp, micro_fp, micro_fn);

    // Schema order keeps the report deterministic.
    let mut per_class = Vec::new();
    for category in &schema.categories {
        let id = &category.id;
        let in_scope = match macro_over {
            MacroAveraging::GoldClasses => support.contains_key(id),
            MacroAveraging::AllSchemaClasses => true,
        };
        if !in_scope {
            continue;
        }
        let (tp, fp, fn_) = (
            tp.get(id).copied().unwrap_or(0),
            fp.get(id).copied().unwrap_or(0),
            fn_.get(id).copied().unwrap_or(0),
        );
        let (precision, recall, f1) = f1_from_counts(tp, fp, fn_);
        per_class.push(ClassMetrics {
            category_id: id.clone(),
            support: support.get(id).copied().unwrap_or(0),
            tp,
            fp,
            fn_,
            precision,
            recall,
            f1,
        });
    }
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / per_class.len() as f64;

    Ok(MetricsReport {
        n_evaluated,
        n_labeled,
        coverage,
        micro_f1,
        macro_f1,
        macro_over,
        per_class,
    })
}

/// Correct/total counts for one class of a binary benchmark.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassBinaryOutcome {
    pub category_id: CategoryId,
    pub correct: u64,
    pub total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassAccuracy {
    pub category_id: CategoryId,
    pub correct: u64,
    pub total: u64,
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinaryAccuracyReport {
    /// Unweighted mean of per-class accuracies.
    pub macro_accuracy: f64,
    pub per_class: Vec<ClassAccuracy>,
}

/// Macro-averaged binary accuracy: per-class accuracy first, then the
/// unweighted mean, so every class counts equally regardless of size.
pub fn compute_binary_accuracy(
    outcomes: &[ClassBinaryOutcome],
) -> Result<BinaryAccuracyReport, EvalError> {
    if outcomes.is_empty() {
        return Err(EvalError::NoClasses);
    }
    let mut per_class = Vec::with_capacity(outcomes.len());
    for outcome in outcomes {
        if outcome.total == 0 {
            return Err(EvalError::ClassWithoutTrials {
                category_id: outcome.category_id.as_str().to_owned(),
            });
        }
        if outcome.correct > outcome.total {
            return Err(EvalError::InvalidCounts {
                category_id: outcome.category_id.as_str().to_owned(),
                correct: outcome.correct,
                total: outcome.total,
            });
        }
        per_class.push(ClassAccuracy {
            category_id: outcome.category_id.clone(),
            correct: outcome.correct,
            total: outcome.total,
            accuracy: outcome.correct as f64 / outcome.total as f64,
        });
    }
    let macro_accuracy =
        per_class.iter().map(|c| c.accuracy).sum::<f64>() / per_class.len() as f64;
    Ok(BinaryAccuracyReport {
        macro_accuracy,
        per_class,
    })
}

/// One benchmark trial: a sample judged against a single category, with
/// the expected verdict.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkPair {
    pub sample: Sample,
    pub positive: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryPairs {
    pub category_id: CategoryId,
    /// Positives first, then negatives, each in dataset order. Always
    /// balanced: as many positives as negatives.
    pub pairs: Vec<BenchmarkPair>,
}

/// A balanced per-class membership benchmark.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryBenchmark {
    pub seed: u64,
    pub per_category: Vec<CategoryPairs>,
}

impl BinaryBenchmark {
    pub fn total_pairs(&self) -> usize {
        self.per_category.iter().map(|c| c.pairs.len()).sum()
    }
}

fn class_rng(seed: u64, category_id: &CategoryId) -> ChaCha8Rng {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(category_id.as_str().as_bytes());
    ChaCha8Rng::from_seed(hasher.finalize().into())
}

/// Builds a balanced binary benchmark from gold-labeled samples.
///
/// Per schema category: positives are up to `per_class_cap` members
/// (seeded subsample when the class is larger), negatives are the same
/// number of non-members drawn uniformly without replacement. When the
/// negative pool is smaller than the positive draw, positives shrink to
/// keep the class balanced. Classes with no members (or no balanced pair
/// at all) are skipped with a warning. Selection is deterministic in
/// (`seed`, category id) and independent of schema order.
pub fn build_binary_benchmark(
    samples: &[Sample],
    schema: &LabelSchema,
    per_class_cap: usize,
    seed: u64,
) -> Result<(BinaryBenchmark, Vec<String>), EvalError> {
    let with_gold: Vec<&Sample> = samples.iter().filter(|s| s.gold.is_some()).collect();
    if with_gold.is_empty() {
        return Err(EvalError::NoGoldLabels);
    }
    for sample in &with_gold {
        let gold = sample.gold.as_ref().expect("filtered to gold-bearing");
        if !schema.contains(gold) {
            return Err(EvalError::GoldNotInSchema {
                sample_id: sample.id.as_str().to_owned(),
                gold: gold.as_str().to_owned(),
            });
        }
    }

    let mut warnings = Vec::new();
    let mut per_category = Vec::new();
    for category in &schema.categories {
        let members: Vec<&Sample> = with_gold
            .iter()
            .copied()
            .filter(|s| s.gold.as_ref() == Some(&category.id))
            .collect();
        if members.is_empty() {
            warnings.push(format!(
                "category {:?} has no gold members; skipped",
                category.id.as_str()
            ));
            continue;
        }
        let non_members: Vec<&Sample> = with_gold
            .iter()
            .copied()
            .filter(|s| s.gold.as_ref() != Some(&category.id))
            .collect();
        let take = members
            .len()
            .min(per_class_cap)
            .min(non_members.len());
        if take == 0 {
            warnings.push(format!(
                "category {:?} has no negatives available; skipped",
                category.id.as_str()
            ));
            continue;
        }

        let mut rng = class_rng(seed, &category.id);
        let positives = draw_in_order(&members, take, &mut rng);
        let negatives = draw_in_order(&non_members, take, &mut rng);

        let mut pairs = Vec::with_capacity(take * 2);
        pairs.extend(positives.into_iter().map(|sample| BenchmarkPair {
            sample: sample.clone(),
            positive: true,
        }));
        pairs.extend(negatives.into_iter().map(|sample| BenchmarkPair {
            sample: sample.clone(),
            positive: false,
        }));
        per_category.push(CategoryPairs {
            category_id: category.id.clone(),
            pairs,
        });
    }
    if per_category.is_empty() {
        return Err(EvalError::NoClasses);
    }
    Ok((
        BinaryBenchmark {
            seed,
            per_category,
        },
        warnings,
    ))
}

/// `amount` distinct elements of `pool`, chosen uniformly, returned in
/// pool (dataset) order so output order never depends on RNG draw order.
fn draw_in_order<'a>(pool: &[&'a Sample], amount: usize, rng: &mut ChaCha8Rng) -> Vec<&'a Sample> {
    if amount >= pool.len() {
        return pool.to_vec();
    }
    let mut picked: Vec<usize> = sample_indices(rng, pool.len(), amount).into_vec();
    picked.sort_unstable();
    picked.into_iter().map(|index| pool[index]).collect()
}

/// Label wording for exported training examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelForm {
    Ids,
    Names,
}

#[derive(Debug, Serialize, Deserialize)]
struct DistillationExample<'a> {
    text: &'a str,
    label: &'a str,
}

/// Writes labeled predictions as `{"text", "label"}` lines for training a
/// student classifier. Abstentions are skipped. Returns the number of
/// lines written; zero is legal (caller may warn).
pub fn export_distillation_set(
    predictions: &[Prediction],
    samples: &[Sample],
    schema: &LabelSchema,
    label_form: LabelForm,
    writer: &mut impl Write,
) -> Result<u64, EvalError> {
    let text_by_id: HashMap<&SampleId, &str> = samples
        .iter()
        .map(|sample| (&sample.id, sample.text.as_str()))
        .collect();
    let mut written = 0u64;
    for prediction in predictions {
        let category_id = match prediction.label() {
            Some(category_id) => category_id,
            None => continue,
        };
        let text = text_by_id
            .get(&prediction.sample_id)
            .ok_or_else(|| EvalError::UnknownSample {
                sample_id: prediction.sample_id.as_str().to_owned(),
            })?;
        let category = schema
            .category(category_id)
            .ok_or_else(|| EvalError::PredictedNotInSchema {
                sample_id: prediction.sample_id.as_str().to_owned(),
                category_id: category_id.as_str().to_owned(),
            })?;
        let label = match label_form {
            LabelForm::Ids => category.id.as_str(),
            LabelForm::Names => category.name.as_str(),
        };
        let line = serde_json::to_string(&DistillationExample { text, label })?;
        writeln!(writer, "{line}")?;
        written += 1;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Category, Outcome};

    fn schema() -> LabelSchema {
        LabelSchema::new(
            "test sample",
            vec![
                Category::new("a", "alpha", ""),
                Category::new("b", "beta", ""),
                Category::new("c", "gamma", ""),
            ],
        )
    }

    fn labeled(sample: &str, category: &str, step: u32) -> Prediction {
        Prediction {
            sample_id: sample.into(),
            outcome: Outcome::Labeled {
                category_id: category.into(),
                step_rank: step,
            },
            trace: vec![],
            llm_calls: 0,
            wall_ms: 0,
        }
    }

    fn abstained(sample: &str) -> Prediction {
        Prediction {
            sample_id: sample.into(),
            outcome: Outcome::Abstained,
            trace: vec![],
            llm_calls: 0,
            wall_ms: 0,
        }
    }

    #[test]
    fn hand_checked_metrics() {
        let samples = vec![
            Sample::new("s1", "t1").with_gold("a"),
            Sample::new("s2", "t2").with_gold("a"),
            Sample::new("s3", "t3").with_gold("b"),
            Sample::new("s4", "t4").with_gold("b"),
        ];
        let predictions = vec![
            labeled("s1", "a", 1),
            abstained("s2"),
            labeled("s3", "b", 1),
            labeled("s4", "a", 1),
        ];
        let report = compute_multiclass_metrics(
            &predictions,
            &samples,
            &schema(),
            MacroAveraging::GoldClasses,
        )
        .unwrap();
        assert_eq!(report.n_evaluated, 4);
        assert_eq!(report.n_labeled, 3);
        assert_eq!(report.coverage, 0.75);
        assert_eq!(report.micro_f1, 0.6666666666666666);
        assert_eq!(report.macro_f1, 0.6666666666666666);
        // Gold-present classes only: a and b, not c.
        assert_eq!(report.per_class.len(), 2);
        let a = &report.per_class[0];
        assert_eq!((a.tp, a.fp, a.fn_), (1, 1, 0));
        assert_eq!((a.precision, a.recall), (0.5, 1.0));
        let b = &report.per_class[1];
        assert_eq!((b.tp, b.fp, b.fn_), (1, 0, 1));
        assert_eq!((b.precision, b.recall), (1.0, 0.5));
    }

    #[test]
    fn all_schema_macro_counts_absent_classes_as_zero() {
        let samples = vec![Sample::new("s1", "t1").with_gold("a")];
        let predictions = vec![labeled("s1", "a", 1)];
        let gold_only = compute_multiclass_metrics(
            &predictions,
            &samples,
            &schema(),
            MacroAveraging::GoldClasses,
        )
        .unwrap();
        assert_eq!(gold_only.macro_f1, 1.0);
        let all = compute_multiclass_metrics(
            &predictions,
            &samples,
            &schema(),
            MacroAveraging::AllSchemaClasses,
        )
        .unwrap();
        assert_eq!(all.per_class.len(), 3);
        assert_eq!(all.macro_f1, 1.0 / 3.0);
    }

    #[test]
    fn all_abstained_is_an_error_with_counts() {
        let samples = vec![Sample::new("s1", "t1").with_gold("a")];
        let predictions = vec![abstained("s1")];
        let err = compute_multiclass_metrics(
            &predictions,
            &samples,
            &schema(),
            MacroAveraging::GoldClasses,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            EvalError::NoLabeledPredictions { n_evaluated: 1 }
        ));
        assert!(err.to_string().contains("coverage 0"));
    }

    #[test]
    fn binary_accuracy_macro_averages() {
        let report = compute_binary_accuracy(&[
            ClassBinaryOutcome {
                category_id: "a".into(),
                correct: 9,
                total: 10,
            },
            ClassBinaryOutcome {
                category_id: "b".into(),
                correct: 1,
                total: 2,
            },
        ])
        .unwrap();
        assert_eq!(report.macro_accuracy, 0.7);
        assert!(matches!(
            compute_binary_accuracy(&[]),
            Err(EvalError::NoClasses)
        ));
        assert!(matches!(
            compute_binary_accuracy(&[ClassBinaryOutcome {
                category_id: "a".into(),
                correct: 0,
                total: 0,
            }]),
            Err(EvalError::ClassWithoutTrials { .. })
        ));
    }

    #[test]
    fn benchmark_is_balanced_and_seeded() {
        let mut samples = Vec::new();
        for i in 0..10 {
            samples.push(Sample::new(format!("a{i}"), format!("text a{i}")).with_gold("a"));
        }
        for i in 0..4 {
            samples.push(Sample::new(format!("b{i}"), format!("text b{i}")).with_gold("b"));
        }
        let (benchmark, warnings) =
            build_binary_benchmark(&samples, &schema(), 6, 42).unwrap();
        // Class c has no members.
        assert_eq!(warnings.len(), 1);
        assert_eq!(benchmark.per_category.len(), 2);
        let a = &benchmark.per_category[0];
        // Cap 6 and only 4 non-members: shrinks to 4 + 4.
        assert_eq!(a.pairs.len(), 8);
        assert_eq!(a.pairs.iter().filter(|p| p.positive).count(), 4);
        let b = &benchmark.per_category[1];
        assert_eq!(b.pairs.len(), 8);

        let (again, _) = build_binary_benchmark(&samples, &schema(), 6, 42).unwrap();
        assert_eq!(again, benchmark);
        let (different, _) = build_binary_benchmark(&samples, &schema(), 6, 43).unwrap();
        assert_ne!(different, benchmark);
    }

    #[test]
    fn distillation_export_skips_abstentions() {
        let samples = vec![
            Sample::new("s1", "first text").with_gold("a"),
            Sample::new("s2", "second text"),
        ];
        let predictions = vec![labeled("s1", "a", 1), abstained("s2")];
        let mut out = Vec::new();
        let written =
            export_distillation_set(&predictions, &samples, &schema(), LabelForm::Names, &mut out)
                .unwrap();
        assert_eq!(written, 1);
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "{\"text\":\"first text\",\"label\":\"alpha\"}\n"
        );
    }
}
