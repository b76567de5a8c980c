//! Retrieval-augmented classification (RAC).
//!
//! This crate implements a zero-shot auto-labeling pipeline for text
//! classification over large label schemas. Instead of cramming every
//! category into one prompt, a run embeds each category representation
//! once, ranks categories by cosine similarity against each sample, and
//! then walks the ranked list asking a language model a focused binary
//! question ("does this sample belong to this category?") per step,
//! stopping at the first accept. Walks can be truncated after a fixed
//! number of steps to trade coverage for precision and latency.
//!
//! Module map:
//!
//! - [`types`]: schema, sample, and prediction types shared everywhere.
//! - [`retrieval`]: category embedding index, cosine ranking, MRR@k.
//! - [`prompting`]: prompt templates, rendering, and answer parsing.
//! - [`llm`]: completion client trait, HTTP client, scripted test client.
//! - [`policy`]: vote aggregation rules (agreement, majority, unanimous).
//! - [`engine`]: the per-sample walk and dataset runner.
//! - [`schemagen`]: label name/description generation from grouped examples.
//! - [`eval`]: multiclass metrics with abstention, binary benchmarks,
//!   distillation export.

pub mod engine;
pub mod eval;
pub mod hash;
pub mod llm;
pub mod policy;
pub mod prompting;
pub mod retrieval;
pub mod schemagen;
pub mod types;
