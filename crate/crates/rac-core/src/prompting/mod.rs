//! Prompt templates, rendering, and completion parsing.
//!
//! Templates are plain text with `{{ name }}` placeholders. The built-in
//! set ships with the crate; any template can be overridden by a file of
//! the same name in a user-supplied directory. Rendering is pure string
//! substitution: placeholder values are inserted verbatim and are never
//! re-scanned, so sample text containing `{{` cannot inject anything.
//!
//! Binary prompts ask whether one sample belongs to one category. The
//! direct variant ends with `Choices, yes or no? Answer:`; the reasoning
//! variant ends with `explain your answer step-by-step?`. When a run uses
//! label-only category representations the `Category description:` line is
//! dropped from the prompt entirely rather than rendered empty.

use std::path::Path;
use std::sync::LazyLock;

use regex::Regex;

use crate::types::{AnswerKind, BinaryAnswer, Category, CategoryId, LabelSchema, PromptVariant};

const BINARY_NO_COT: &str = include_str!("templates/binary_no_cot.txt");
const BINARY_COT: &str = include_str!("templates/binary_cot.txt");
const NAME_GEN: &str = include_str!("templates/name_gen.txt");
const DESC_GEN: &str = include_str!("templates/desc_gen.txt");
const MULTICLASS: &str = include_str!("templates/multiclass.txt");

/// File names used for directory overrides, one per template slot.
pub const TEMPLATE_FILE_NAMES: [&str; 5] = [
    "binary_no_cot.txt",
    "binary_cot.txt",
    "name_gen.txt",
    "desc_gen.txt",
    "multiclass.txt",
];

#[derive(Debug, thiserror::Error)]
pub enum PromptError {
    #[error("template references unknown placeholder {{{{ {name} }}}}")]
    UnknownPlaceholder { name: String },
    #[error("template has an unclosed {{{{ placeholder")]
    UnclosedPlaceholder,
    #[error("template {template:?} is missing required placeholder {{{{ {name} }}}}")]
    MissingPlaceholder { template: String, name: String },
    #[error("{field} must be non-empty")]
    MissingValue { field: &'static str },
    #[error("sample list for generation prompts must be non-empty")]
    EmptySamples,
    #[error("failed to read template {path}: {source}")]
    TemplateLoad {
        path: String,
        source: std::io::Error,
    },
}

/// The five templates a run needs. Construct with [`TemplateSet::default`]
/// for the built-ins or [`TemplateSet::from_dir`] to override from files.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    pub binary_no_cot: String,
    pub binary_cot: String,
    pub name_gen: String,
    pub desc_gen: String,
    pub multiclass: String,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            binary_no_cot: BINARY_NO_COT.to_owned(),
            binary_cot: BINARY_COT.to_owned(),
            name_gen: NAME_GEN.to_owned(),
            desc_gen: DESC_GEN.to_owned(),
            multiclass: MULTICLASS.to_owned(),
        }
    }
}

impl TemplateSet {
    /// Loads overrides from `dir`. Each of [`TEMPLATE_FILE_NAMES`] that
    /// exists replaces the built-in of the same name; absent files keep
    /// the default. Every loaded template must still contain the
    /// placeholders its renderer needs.
    pub fn from_dir(dir: &Path) -> Result<Self, PromptError> {
        let mut set = Self::default();
        let slots: [(&str, &mut String); 5] = [
            ("binary_no_cot.txt", &mut set.binary_no_cot),
            ("binary_cot.txt", &mut set.binary_cot),
            ("name_gen.txt", &mut set.name_gen),
            ("desc_gen.txt", &mut set.desc_gen),
            ("multiclass.txt", &mut set.multiclass),
        ];
        for (name, slot) in slots {
            let path = dir.join(name);
            if path.exists() {
                *slot = std::fs::read_to_string(&path).map_err(|source| {
                    PromptError::TemplateLoad {
                        path: path.display().to_string(),
                        source,
                    }
                })?;
            }
        }
        set.validate()?;
        Ok(set)
    }

    /// Checks that every template carries its required placeholders and
    /// references nothing else, so overrides fail at load time rather
    /// than on the first render.
    pub fn validate(&self) -> Result<(), PromptError> {
        let required: [(&str, &str, &[&str]); 5] = [
            (
                "binary_no_cot",
                &self.binary_no_cot,
                &["domainDataDescription", "categoryLabel", "categoryDescription", "text"],
            ),
            (
                "binary_cot",
                &self.binary_cot,
                &["domainDataDescription", "categoryLabel", "categoryDescription", "text"],
            ),
            ("name_gen", &self.name_gen, &["domainDataDescription", "samples"]),
            ("desc_gen", &self.desc_gen, &["domainDataDescription", "samples"]),
            (
                "multiclass",
                &self.multiclass,
                &["domainDataDescription", "categories", "text"],
            ),
        ];
        for (slot, template, names) in required {
            let found = placeholders(template)?;
            for name in names {
                if !found.iter().any(|f| f == name) {
                    return Err(PromptError::MissingPlaceholder {
                        template: slot.to_owned(),
                        name: (*name).to_owned(),
                    });
                }
            }
            if let Some(unknown) = found.iter().find(|f| !names.contains(&f.as_str())) {
                return Err(PromptError::UnknownPlaceholder {
                    name: unknown.clone(),
                });
            }
        }
        Ok(())
    }

    fn binary(&self, variant: PromptVariant) -> &str {
        match variant {
            PromptVariant::NoCot => &self.binary_no_cot,
            PromptVariant::Cot => &self.binary_cot,
        }
    }
}

/// A rendered prompt plus the variant that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub variant: PromptVariant,
    pub text: String,
}

/// Lists every `{{ name }}` placeholder in a template, in order.
pub fn placeholders(template: &str) -> Result<Vec<String>, PromptError> {
    let mut names = Vec::new();
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(PromptError::UnclosedPlaceholder)?;
        names.push(after[..end].trim().to_owned());
        rest = &after[end + 2..];
    }
    Ok(names)
}

/// Substitutes `{{ name }}` placeholders from `vars`. Values are inserted
/// verbatim; braces inside values are not interpreted. A placeholder with
/// no matching var is an error.
fn substitute(template: &str, vars: &[(&str, &str)]) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find("}}").ok_or(PromptError::UnclosedPlaceholder)?;
        let name = after[..end].trim();
        let value = vars
            .iter()
            .find(|(key, _)| *key == name)
            .map(|(_, value)| *value)
            .ok_or_else(|| PromptError::UnknownPlaceholder {
                name: name.to_owned(),
            })?;
        out.push_str(value);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Removes every line that references the named placeholder. Used to drop
/// the `Category description:` line for label-only runs.
fn drop_lines_with_placeholder(template: &str, name: &str) -> String {
    let mut kept: Vec<&str> = Vec::new();
    for line in template.split('\n') {
        let references = placeholders(line)
            .map(|found| found.iter().any(|f| f == name))
            .unwrap_or(false);
        if !references {
            kept.push(line);
        }
    }
    kept.join("\n")
}

/// Renders one binary membership prompt for `category` and `sample_text`.
///
/// With `include_description: false` the description line is removed from
/// the template before substitution. With `true`, an empty category
/// description is an error: the prompt would assert a description it does
/// not have.
pub fn render_binary_prompt(
    templates: &TemplateSet,
    variant: PromptVariant,
    domain_description: &str,
    category: &Category,
    sample_text: &str,
    include_description: bool,
) -> Result<RenderedPrompt, PromptError> {
    if domain_description.is_empty() {
        return Err(PromptError::MissingValue {
            field: "domain_description",
        });
    }
    if category.name.is_empty() {
        return Err(PromptError::MissingValue {
            field: "category name",
        });
    }
    if sample_text.is_empty() {
        return Err(PromptError::MissingValue {
            field: "sample text",
        });
    }
    let template = templates.binary(variant);
    let text = if include_description {
        if category.description.is_empty() {
            return Err(PromptError::MissingValue {
                field: "category description",
            });
        }
        substitute(
            template,
            &[
                ("domainDataDescription", domain_description),
                ("categoryLabel", &category.name),
                ("categoryDescription", &category.description),
                ("text", sample_text),
            ],
        )?
    } else {
        let stripped = drop_lines_with_placeholder(template, "categoryDescription");
        substitute(
            &stripped,
            &[
                ("domainDataDescription", domain_description),
                ("categoryLabel", &category.name),
                ("text", sample_text),
            ],
        )?
    };
    Ok(RenderedPrompt { variant, text })
}

static YES_NO: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(yes|no)\b").expect("static regex"));

/// Parses a binary completion into yes/no/unparseable.
///
/// The direct variant takes the first standalone `yes`/`no` token
/// (case-insensitive, word-bounded); the reasoning variant takes the last,
/// because the verdict follows the rationale. A completion with no such
/// token is `Unparseable`, which downstream aggregation treats as no.
pub fn parse_binary_answer(variant: PromptVariant, completion: &str) -> BinaryAnswer {
    let hit = match variant {
        PromptVariant::NoCot => YES_NO.find(completion),
        PromptVariant::Cot => YES_NO.find_iter(completion).last(),
    };
    let kind = match hit {
        Some(token) if token.as_str().eq_ignore_ascii_case("yes") => AnswerKind::Yes,
        Some(_) => AnswerKind::No,
        None => AnswerKind::Unparseable,
    };
    BinaryAnswer::new(kind, completion)
}

fn render_generation_prompt(
    template: &str,
    domain_description: &str,
    samples: &[String],
) -> Result<String, PromptError> {
    if domain_description.is_empty() {
        return Err(PromptError::MissingValue {
            field: "domain_description",
        });
    }
    if samples.is_empty() || samples.iter().any(|s| s.is_empty()) {
        return Err(PromptError::EmptySamples);
    }
    let joined = samples.join("\n");
    substitute(
        template,
        &[
            ("domainDataDescription", domain_description),
            ("samples", &joined),
        ],
    )
}

/// Renders the category-name generation prompt over same-class samples,
/// inserted in order, one per line. Ends with `Created category name:`.
pub fn render_name_gen_prompt(
    templates: &TemplateSet,
    domain_description: &str,
    samples: &[String],
) -> Result<String, PromptError> {
    render_generation_prompt(&templates.name_gen, domain_description, samples)
}

/// Renders the category-description generation prompt. Ends with
/// `Created category description:`.
pub fn render_desc_gen_prompt(
    templates: &TemplateSet,
    domain_description: &str,
    samples: &[String],
) -> Result<String, PromptError> {
    render_generation_prompt(&templates.desc_gen, domain_description, samples)
}

/// Renders the whole-schema prompt used by the all-in-one baseline: every
/// category on a numbered line (`3. card arrival: ...`), the sample once,
/// and an instruction to answer with the matching number.
pub fn render_multiclass_prompt(
    templates: &TemplateSet,
    schema: &LabelSchema,
    sample_text: &str,
    include_description: bool,
) -> Result<String, PromptError> {
    if schema.domain_description.is_empty() {
        return Err(PromptError::MissingValue {
            field: "domain_description",
        });
    }
    if sample_text.is_empty() {
        return Err(PromptError::MissingValue {
            field: "sample text",
        });
    }
    let mut lines = Vec::with_capacity(schema.categories.len());
    for (index, category) in schema.categories.iter().enumerate() {
        if category.name.is_empty() {
            return Err(PromptError::MissingValue {
                field: "category name",
            });
        }
        let line = if include_description && category.has_description() {
            format!("{}. {}: {}", index + 1, category.name, category.description)
        } else {
            format!("{}. {}", index + 1, category.name)
        };
        lines.push(line);
    }
    let categories = lines.join("\n");
    substitute(
        &templates.multiclass,
        &[
            ("domainDataDescription", &schema.domain_description),
            ("categories", &categories),
            ("text", sample_text),
        ],
    )
}

/// Resolves a multiclass completion to a category, or `None` when the
/// answer cannot be attributed to exactly one category.
///
/// Resolution order: a leading number (after trimming punctuation) naming
/// a list position; else a completion equal to exactly one category name
/// (case-insensitive); else a completion containing exactly one category
/// name. Ambiguity at any stage abstains rather than guesses.
pub fn parse_multiclass_answer(completion: &str, schema: &LabelSchema) -> Option<CategoryId> {
    let trimmed = completion.trim();
    if trimmed.is_empty() {
        return None;
    }

    let first_token = trimmed
        .split_whitespace()
        .next()
        .unwrap_or("")
        .trim_matches(|c: char| !c.is_ascii_alphanumeric());
    if let Ok(number) = first_token.parse::<usize>() {
        if number >= 1 && number <= schema.categories.len() {
            return Some(schema.categories[number - 1].id.clone());
        }
        return None;
    }

    let cleaned = trimmed
        .trim_matches(|c: char| !c.is_ascii_alphanumeric())
        .to_lowercase();
    let exact: Vec<&Category> = schema
        .categories
        .iter()
        .filter(|c| !c.name.is_empty() && c.name.to_lowercase() == cleaned)
        .collect();
    if exact.len() == 1 {
        return Some(exact[0].id.clone());
    }
    if exact.len() > 1 {
        return None;
    }

    let lowered = trimmed.to_lowercase();
    let containing: Vec<&Category> = schema
        .categories
        .iter()
        .filter(|c| !c.name.is_empty() && lowered.contains(&c.name.to_lowercase()))
        .collect();
    if containing.len() == 1 {
        return Some(containing[0].id.clone());
    }
    None
}
