//! Vote aggregation: how a step's binary votes become an accept or reject.
//!
//! A policy names which prompt variants run, how many sampled repeats each
//! variant gets, and the rule that folds the resulting votes into one
//! [`Decision`]. Unparseable answers count as "no" everywhere; they can
//! never push a step toward accepting.

use serde::{Deserialize, Serialize};

pub use crate::types::{AnswerKind, Decision, PromptVariant, VoteRecord};

/// The supported aggregation rules.
///
/// * `Agreement`: aggregate each variant separately (strict majority of its
///   repeats), then accept iff every variant lands on yes. With the default
///   two variants this accepts only when the direct answer and the
///   reasoned answer agree on yes. With a single variant it reduces to
///   `Majority`.
/// * `Majority`: pool all votes across variants; accept iff strictly more
///   than half are yes. Ties reject.
/// * `Unanimous`: accept iff every single vote is yes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationRule {
    Agreement,
    Majority,
    Unanimous,
}

/// A validated vote-collection plan for one binary step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionPolicy {
    pub rule: AggregationRule,
    /// Prompt variants to run, in dispatch order. Non-empty, no duplicates.
    pub variants: Vec<PromptVariant>,
    /// Sampled repeats per variant. At least 1; 1 means a single
    /// deterministic completion per variant.
    pub votes_per_variant: u32,
}

impl DecisionPolicy {
    pub fn new(
        rule: AggregationRule,
        variants: Vec<PromptVariant>,
        votes_per_variant: u32,
    ) -> Result<Self, PolicyError> {
        let policy = Self {
            rule,
            variants,
            votes_per_variant,
        };
        policy.validate()?;
        Ok(policy)
    }

    /// The flagship configuration: direct and reasoned answers must agree,
    /// one deterministic completion each.
    pub fn agreement() -> Self {
        Self {
            rule: AggregationRule::Agreement,
            variants: vec![PromptVariant::NoCot, PromptVariant::Cot],
            votes_per_variant: 1,
        }
    }

    /// Strict majority over `votes` sampled repeats of one variant.
    pub fn majority(variant: PromptVariant, votes: u32) -> Self {
        Self {
            rule: AggregationRule::Majority,
            variants: vec![variant],
            votes_per_variant: votes,
        }
    }

    /// Every one of `votes` repeats of one variant must say yes.
    pub fn unanimous(variant: PromptVariant, votes: u32) -> Self {
        Self {
            rule: AggregationRule::Unanimous,
            variants: vec![variant],
            votes_per_variant: votes,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.variants.is_empty() {
            return Err(PolicyError::EmptyVariants);
        }
        for (index, variant) in self.variants.iter().enumerate() {
            if self.variants[..index].contains(variant) {
                return Err(PolicyError::DuplicateVariant { variant: *variant });
            }
        }
        if self.votes_per_variant == 0 {
            return Err(PolicyError::ZeroVotes);
        }
        Ok(())
    }

    /// Logical LLM calls one step costs under this policy.
    pub fn votes_per_step(&self) -> u64 {
        self.variants.len() as u64 * u64::from(self.votes_per_variant)
    }
}

impl Default for DecisionPolicy {
    fn default() -> Self {
        Self::agreement()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("policy has no prompt variants")]
    EmptyVariants,
    #[error("variant {variant} listed more than once")]
    DuplicateVariant { variant: PromptVariant },
    #[error("votes_per_variant must be at least 1")]
    ZeroVotes,
    #[error("vote carries variant {variant} which the policy does not run")]
    UnexpectedVariant { variant: PromptVariant },
    #[error("variant {variant} has {actual} votes, policy expects {expected}")]
    WrongVoteCount {
        variant: PromptVariant,
        expected: u32,
        actual: u32,
    },
    #[error("variant {variant} vote ordinal {ordinal} outside 1..={max}")]
    BadOrdinal {
        variant: PromptVariant,
        ordinal: u32,
        max: u32,
    },
    #[error("variant {variant} has two votes with ordinal {ordinal}")]
    DuplicateOrdinal { variant: PromptVariant, ordinal: u32 },
}

fn is_yes(vote: &VoteRecord) -> bool {
    vote.answer.kind == AnswerKind::Yes
}

/// Folds one step's votes into a decision under `policy`.
///
/// The vote set must match the policy exactly: every configured variant
/// present with ordinals `1..=votes_per_variant` (in any order), and no
/// votes from unconfigured variants. The result depends only on the
/// multiset of votes, never on their order.
pub fn decide(policy: &DecisionPolicy, votes: &[VoteRecord]) -> Result<Decision, PolicyError> {
    policy.validate()?;
    let expected = policy.votes_per_variant;
    for vote in votes {
        if !policy.variants.contains(&vote.variant) {
            return Err(PolicyError::UnexpectedVariant {
                variant: vote.variant,
            });
        }
        if vote.ordinal == 0 || vote.ordinal > expected {
            return Err(PolicyError::BadOrdinal {
                variant: vote.variant,
                ordinal: vote.ordinal,
                max: expected,
            });
        }
    }
    for variant in &policy.variants {
        let of_variant: Vec<&VoteRecord> = votes.iter().filter(|v| v.variant == *variant).collect();
        if of_variant.len() != expected as usize {
            return Err(PolicyError::WrongVoteCount {
                variant: *variant,
                expected,
                actual: of_variant.len() as u32,
            });
        }
        for (index, vote) in of_variant.iter().enumerate() {
            if of_variant[..index].iter().any(|v| v.ordinal == vote.ordinal) {
                return Err(PolicyError::DuplicateOrdinal {
                    variant: *variant,
                    ordinal: vote.ordinal,
                });
            }
        }
    }

    let accept = match policy.rule {
        AggregationRule::Agreement => policy.variants.iter().all(|variant| {
            let yes = votes
                .iter()
                .filter(|v| v.variant == *variant && is_yes(v))
                .count();
            yes * 2 > expected as usize
        }),
        AggregationRule::Majority => {
            let yes = votes.iter().filter(|v| is_yes(v)).count();
            yes * 2 > votes.len()
        }
        AggregationRule::Unanimous => votes.iter().all(is_yes),
    };
    Ok(if accept { Decision::Accept } else { Decision::Reject })
}
