//! Schema generation: turning grouped example texts into a label schema
//! by asking the model to name and describe each class.
//!
//! Input is clustered but unlabeled data: groups of same-class sample
//! texts under provisional ids. Each class gets a generated name and a
//! generated description from up to `samples_per_class` seeded-subsampled
//! examples. Over-length generations are kept verbatim and surfaced as
//! warnings, never truncated silently.

use std::collections::HashSet;
use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::llm::{CompletionRequest, LlmClient, LlmError};
use crate::prompting::{render_desc_gen_prompt, render_name_gen_prompt, PromptError, TemplateSet};
use crate::types::{validate_schema, Category, CategoryId, LabelSchema};

/// Example texts that belong to one (still unnamed) class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassExamples {
    pub provisional_id: CategoryId,
    pub samples: Vec<String>,
}

/// One line of a grouped-examples file.
#[derive(Debug, Deserialize)]
struct GroupedLine {
    provisional_id: CategoryId,
    text: String,
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaGenError {
    #[error("line {line}: invalid json: {message}")]
    ParseLine { line: usize, message: String },
    #[error("line {line}: empty example text for class {id:?}")]
    EmptyExampleText { line: usize, id: String },
    #[error("grouped-examples input contains no examples")]
    NoExamples,
    #[error("schema generation needs at least 2 classes, got {count}")]
    TooFewClasses { count: usize },
    #[error("duplicate provisional id {id:?}")]
    DuplicateProvisionalId { id: String },
    #[error("class {id:?} has no example samples")]
    EmptyGroup { id: String },
    #[error("class {id:?}: {op} generation failed: {source}")]
    Llm {
        id: String,
        op: &'static str,
        source: LlmError,
    },
    #[error("class {id:?}: model returned an empty {op}")]
    EmptyCompletion { id: String, op: &'static str },
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Reads a line-delimited grouped-examples file
/// (`{"provisional_id", "text"}` per line). Groups keep first-appearance
/// order; texts keep file order within their group.
pub fn read_grouped_examples(reader: impl BufRead) -> Result<Vec<ClassExamples>, SchemaGenError> {
    let mut order: Vec<CategoryId> = Vec::new();
    let mut groups: std::collections::HashMap<CategoryId, Vec<String>> =
        std::collections::HashMap::new();
    for (index, line) in reader.lines().enumerate() {
        let number = index + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: GroupedLine =
            serde_json::from_str(&line).map_err(|err| SchemaGenError::ParseLine {
                line: number,
                message: err.to_string(),
            })?;
        if parsed.text.is_empty() {
            return Err(SchemaGenError::EmptyExampleText {
                line: number,
                id: parsed.provisional_id.as_str().to_owned(),
            });
        }
        if !groups.contains_key(&parsed.provisional_id) {
            order.push(parsed.provisional_id.clone());
        }
        groups
            .entry(parsed.provisional_id)
            .or_default()
            .push(parsed.text);
    }
    if order.is_empty() {
        return Err(SchemaGenError::NoExamples);
    }
    Ok(order
        .into_iter()
        .map(|provisional_id| {
            let samples = groups
                .remove(&provisional_id)
                .expect("group recorded in order");
            ClassExamples {
                provisional_id,
                samples,
            }
        })
        .collect())
}

/// A generated name or description, kept verbatim.
#[derive(Debug, Clone, PartialEq)]
pub struct Generated {
    pub text: String,
    pub word_count: usize,
    /// The raw completion before quote/line cleanup.
    pub raw: String,
}

/// Non-fatal observations from schema generation.
#[derive(Debug, Clone, PartialEq)]
pub enum SchemaGenWarning {
    NameOverCap { id: CategoryId, words: usize },
    DescriptionOverCap { id: CategoryId, words: usize },
    DuplicateName { name: String, ids: Vec<CategoryId> },
}

impl fmt::Display for SchemaGenWarning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::NameOverCap { id, words } => write!(
                f,
                "class {:?}: generated name has {words} words (asked for at most 10)",
                id.as_str()
            ),
            Self::DescriptionOverCap { id, words } => write!(
                f,
                "class {:?}: generated description has {words} words (asked for at most 50)",
                id.as_str()
            ),
            Self::DuplicateName { name, ids } => write!(
                f,
                "classes {:?} share the generated name {name:?} (ids keep them distinct)",
                ids.iter().map(|id| id.as_str()).collect::<Vec<_>>()
            ),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemaGenOutcome {
    pub schema: LabelSchema,
    pub warnings: Vec<SchemaGenWarning>,
}

#[derive(Debug, Clone)]
pub struct SchemaGenConfig {
    /// Domain blurb inserted into the generation prompts and recorded on
    /// the produced schema.
    pub domain_description: String,
    /// Examples shown to the model per class; larger classes are
    /// subsampled with the run seed.
    pub samples_per_class: usize,
    pub seed: u64,
    pub max_tokens: u32,
}

impl SchemaGenConfig {
    pub fn new(domain_description: impl Into<String>) -> Self {
        Self {
            domain_description: domain_description.into(),
            samples_per_class: 10,
            seed: 0,
            max_tokens: 128,
        }
    }
}

pub struct SchemaGenerator {
    llm: Arc<dyn LlmClient>,
    templates: TemplateSet,
    config: SchemaGenConfig,
}

const NAME_WORD_CAP: usize = 10;
const DESC_WORD_CAP: usize = 50;

impl SchemaGenerator {
    pub fn new(llm: Arc<dyn LlmClient>, templates: TemplateSet, config: SchemaGenConfig) -> Self {
        Self {
            llm,
            templates,
            config,
        }
    }

    /// Subsample is deterministic in (seed, provisional id) and keeps
    /// group order, so reordering classes never changes what a class sees.
    fn pick_samples(&self, class: &ClassExamples) -> Vec<String> {
        let limit = self.config.samples_per_class.max(1);
        if class.samples.len() <= limit {
            return class.samples.clone();
        }
        let mut hasher = Sha256::new();
        hasher.update(self.config.seed.to_le_bytes());
        hasher.update(class.provisional_id.as_str().as_bytes());
        let mut rng = ChaCha8Rng::from_seed(hasher.finalize().into());
        let mut picked = sample_indices(&mut rng, class.samples.len(), limit).into_vec();
        picked.sort_unstable();
        picked
            .into_iter()
            .map(|index| class.samples[index].clone())
            .collect()
    }

    fn request(&self, prompt: String) -> CompletionRequest {
        CompletionRequest {
            prompt,
            max_tokens: self.config.max_tokens,
            temperature: 0.0,
            seed: Some(0),
        }
    }

    fn finish(
        class: &ClassExamples,
        op: &'static str,
        raw: String,
    ) -> Result<Generated, SchemaGenError> {
        let text = cleanup_completion(&raw);
        if text.is_empty() {
            return Err(SchemaGenError::EmptyCompletion {
                id: class.provisional_id.as_str().to_owned(),
                op,
            });
        }
        let word_count = text.split_whitespace().count();
        Ok(Generated {
            text,
            word_count,
            raw,
        })
    }

    /// Generates a category name from the class's examples.
    pub fn generate_label_name(&self, class: &ClassExamples) -> Result<Generated, SchemaGenError> {
        if class.samples.is_empty() {
            return Err(SchemaGenError::EmptyGroup {
                id: class.provisional_id.as_str().to_owned(),
            });
        }
        let samples = self.pick_samples(class);
        let prompt = render_name_gen_prompt(
            &self.templates,
            &self.config.domain_description,
            &samples,
        )?;
        let response = self
            .llm
            .complete(&self.request(prompt))
            .map_err(|source| SchemaGenError::Llm {
                id: class.provisional_id.as_str().to_owned(),
                op: "name",
                source,
            })?;
        Self::finish(class, "name", response.text)
    }

    /// Generates a category description from the class's examples.
    pub fn generate_description(&self, class: &ClassExamples) -> Result<Generated, SchemaGenError> {
        if class.samples.is_empty() {
            return Err(SchemaGenError::EmptyGroup {
                id: class.provisional_id.as_str().to_owned(),
            });
        }
        let samples = self.pick_samples(class);
        let prompt = render_desc_gen_prompt(
            &self.templates,
            &self.config.domain_description,
            &samples,
        )?;
        let response = self
            .llm
            .complete(&self.request(prompt))
            .map_err(|source| SchemaGenError::Llm {
                id: class.provisional_id.as_str().to_owned(),
                op: "description",
                source,
            })?;
        Self::finish(class, "description", response.text)
    }

    /// Generates a full schema: one name and one description per class,
    /// provisional ids carried over as category ids. Warnings flag
    /// over-cap generations and duplicate names.
    pub fn build_schema(&self, groups: &[ClassExamples]) -> Result<SchemaGenOutcome, SchemaGenError> {
        if groups.len() < 2 {
            return Err(SchemaGenError::TooFewClasses {
                count: groups.len(),
            });
        }
        let mut seen = HashSet::new();
        for class in groups {
            if !seen.insert(&class.provisional_id) {
                return Err(SchemaGenError::DuplicateProvisionalId {
                    id: class.provisional_id.as_str().to_owned(),
                });
            }
            if class.samples.is_empty() {
                return Err(SchemaGenError::EmptyGroup {
                    id: class.provisional_id.as_str().to_owned(),
                });
            }
        }

        let mut warnings = Vec::new();
        let mut categories = Vec::with_capacity(groups.len());
        for class in groups {
            let name = self.generate_label_name(class)?;
            if name.word_count > NAME_WORD_CAP {
                warnings.push(SchemaGenWarning::NameOverCap {
                    id: class.provisional_id.clone(),
                    words: name.word_count,
                });
            }
            let description = self.generate_description(class)?;
            if description.word_count > DESC_WORD_CAP {
                warnings.push(SchemaGenWarning::DescriptionOverCap {
                    id: class.provisional_id.clone(),
                    words: description.word_count,
                });
            }
            categories.push(Category {
                id: class.provisional_id.clone(),
                name: name.text,
                description: description.text,
            });
        }

        // Duplicate generated names are allowed but worth flagging.
        let mut by_name: Vec<(&str, Vec<CategoryId>)> = Vec::new();
        for category in &categories {
            match by_name.iter_mut().find(|(name, _)| *name == category.name) {
                Some((_, ids)) => ids.push(category.id.clone()),
                None => by_name.push((&category.name, vec![category.id.clone()])),
            }
        }
        for (name, ids) in by_name {
            if ids.len() > 1 {
                warnings.push(SchemaGenWarning::DuplicateName {
                    name: name.to_owned(),
                    ids,
                });
            }
        }

        let schema = LabelSchema::new(self.config.domain_description.clone(), categories);
        debug_assert!(validate_schema(&schema).is_empty());
        Ok(SchemaGenOutcome { schema, warnings })
    }
}

/// First non-empty line of the completion, stripped of surrounding quote
/// pairs and whitespace. Content is otherwise kept verbatim.
fn cleanup_completion(raw: &str) -> String {
    let line = raw
        .lines()
        .map(str::trim)
        .find(|line| !line.is_empty())
        .unwrap_or("");
    let pairs = [('"', '"'), ('\'', '\''), ('`', '`'), ('\u{201c}', '\u{201d}'), ('\u{2018}', '\u{2019}')];
    let mut current = line;
    loop {
        let mut chars = current.chars();
        let (first, last) = match (chars.next(), chars.next_back()) {
            (Some(first), Some(last)) => (first, last),
            _ => break,
        };
        if pairs.iter().any(|(open, close)| first == *open && last == *close) {
            current = current[first.len_utf8()..current.len() - last.len_utf8()].trim();
        } else {
            break;
        }
    }
    current.to_owned()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::ScriptedLlm;

    #[test]
    fn cleanup_strips_quotes_and_extra_lines() {
        assert_eq!(cleanup_completion("\"card arrival\""), "card arrival");
        assert_eq!(cleanup_completion("  'card arrival'  \nextra"), "card arrival");
        assert_eq!(cleanup_completion("\u{201c}quoted\u{201d}"), "quoted");
        assert_eq!(cleanup_completion("plain name"), "plain name");
        assert_eq!(cleanup_completion("\n\n  first\nsecond"), "first");
        assert_eq!(cleanup_completion("men's clothing"), "men's clothing");
        assert_eq!(cleanup_completion("\"\""), "");
    }

    #[test]
    fn subsample_is_deterministic_and_ordered() {
        let llm = Arc::new(ScriptedLlm::from_rule(|_, _| Some("x".to_owned())));
        let mut config = SchemaGenConfig::new("test sample");
        config.samples_per_class = 3;
        let generator = SchemaGenerator::new(llm, TemplateSet::default(), config);
        let class = ClassExamples {
            provisional_id: "g1".into(),
            samples: (0..10).map(|i| format!("sample {i}")).collect(),
        };
        let first = generator.pick_samples(&class);
        let second = generator.pick_samples(&class);
        assert_eq!(first, second);
        assert_eq!(first.len(), 3);
        // Picks keep group order.
        let positions: Vec<usize> = first
            .iter()
            .map(|s| class.samples.iter().position(|x| x == s).unwrap())
            .collect();
        assert!(positions.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn grouped_examples_preserve_first_appearance_order() {
        let data = "\
{\"provisional_id\":\"g2\",\"text\":\"b1\"}
{\"provisional_id\":\"g1\",\"text\":\"a1\"}
{\"provisional_id\":\"g2\",\"text\":\"b2\"}
";
        let groups = read_grouped_examples(data.as_bytes()).unwrap();
        assert_eq!(groups.len(), 2);
        assert_eq!(groups[0].provisional_id.as_str(), "g2");
        assert_eq!(groups[0].samples, vec!["b1", "b2"]);
        assert_eq!(groups[1].samples, vec!["a1"]);
    }
}
