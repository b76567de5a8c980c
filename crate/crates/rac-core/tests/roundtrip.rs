//! Serialization round trips and on-disk format stability for the public
//! data types. Prediction lines, schemas, and ledgers are long-lived
//! artifacts, so their JSON shape is pinned here: a failing test in this
//! file means previously written files would no longer read back.

use proptest::prelude::*;

use rac_core::engine::{LedgerOutcome, LedgerRow, RunLedger};
use rac_core::types::{
    parse_schema, prediction_to_json_line, read_predictions, read_samples, AnswerKind,
    BinaryAnswer, Category, Decision, LabelSchema, Outcome, Prediction, PromptVariant, Sample,
    StepTrace, VoteRecord,
};

fn round_trip_json<T>(value: &T) -> T
where
    T: serde::Serialize + serde::de::DeserializeOwned,
{
    let json = serde_json::to_string(value).expect("serialize");
    serde_json::from_str(&json).expect("deserialize")
}

// -- strategies ------------------------------------------------------------

/// Id-ish strings: anything printable, including spaces and punctuation —
/// ids are opaque and must survive whatever the caller puts in them.
fn id_strategy() -> impl Strategy<Value = String> {
    "[a-z0-9_ .:-]{1,24}"
}

/// Free text, unicode included (escapes must round trip).
fn text_strategy() -> impl Strategy<Value = String> {
    ".{0,80}"
}

fn answer_strategy() -> impl Strategy<Value = BinaryAnswer> {
    (
        prop_oneof![
            Just(AnswerKind::Yes),
            Just(AnswerKind::No),
            Just(AnswerKind::Unparseable)
        ],
        text_strategy(),
    )
        .prop_map(|(kind, raw)| BinaryAnswer::new(kind, raw))
}

fn vote_strategy() -> impl Strategy<Value = VoteRecord> {
    (
        prop_oneof![Just(PromptVariant::NoCot), Just(PromptVariant::Cot)],
        1u32..6,
        answer_strategy(),
    )
        .prop_map(|(variant, ordinal, answer)| VoteRecord {
            variant,
            ordinal,
            answer,
        })
}

fn step_strategy() -> impl Strategy<Value = StepTrace> {
    (
        id_strategy(),
        1u32..50,
        -1.0f64..=1.0,
        proptest::collection::vec(vote_strategy(), 1..5),
        prop_oneof![Just(Decision::Accept), Just(Decision::Reject)],
    )
        .prop_map(|(id, rank, similarity, votes, decision)| StepTrace {
            category_id: id.into(),
            retrieval_rank: rank,
            similarity,
            votes,
            decision,
        })
}

/// Arbitrary structurally-free predictions. Round-tripping must preserve
/// even predictions that would fail consistency checks; serialization is
/// not where validation happens.
fn prediction_strategy() -> impl Strategy<Value = Prediction> {
    (
        id_strategy(),
        prop_oneof![
            (id_strategy(), 1u32..20).prop_map(|(id, step_rank)| Outcome::Labeled {
                category_id: id.into(),
                step_rank,
            }),
            Just(Outcome::Abstained),
        ],
        proptest::collection::vec(step_strategy(), 0..4),
        0u64..10_000,
        0u64..1_000_000,
    )
        .prop_map(|(sample_id, outcome, trace, llm_calls, wall_ms)| Prediction {
            sample_id: sample_id.into(),
            outcome,
            trace,
            llm_calls,
            wall_ms,
        })
}

/// Schemas that pass [`validate_schema`], since `parse_schema` refuses
/// anything else: two or more categories, unique ids, non-empty names.
fn schema_strategy() -> impl Strategy<Value = LabelSchema> {
    (
        text_strategy(),
        proptest::collection::vec(("[a-zA-Z ]{1,20}", text_strategy()), 2..6),
    )
        .prop_map(|(domain, rows)| {
            let categories = rows
                .into_iter()
                .enumerate()
                .map(|(index, (name, description))| {
                    Category::new(format!("cat_{index}"), name, description)
                })
                .collect();
            LabelSchema::new(domain, categories)
        })
}

/// Sample files require unique non-empty ids and non-empty text, so ids
/// are index-derived and text is at least one character.
fn samples_strategy() -> impl Strategy<Value = Vec<Sample>> {
    proptest::collection::vec((".{1,80}", proptest::option::of(id_strategy())), 0..8).prop_map(
        |rows| {
            rows.into_iter()
                .enumerate()
                .map(|(index, (text, gold))| {
                    let sample = Sample::new(format!("s{index}"), text);
                    match gold {
                        Some(gold) => sample.with_gold(gold),
                        None => sample,
                    }
                })
                .collect()
        },
    )
}

/// Predictions that pass `check_consistency`, since `read_predictions`
/// refuses anything else: strictly increasing ranks, rejects up to a
/// final accept when labeled, rejects throughout when abstained.
fn consistent_prediction_strategy() -> impl Strategy<Value = Prediction> {
    (
        id_strategy(),
        proptest::collection::vec((id_strategy(), 1u32..4, -1.0f64..=1.0, vote_strategy()), 0..5),
        proptest::bool::ANY,
        0u64..10_000,
        0u64..1_000_000,
    )
        .prop_map(|(sample_id, step_rows, accept_last, llm_calls, wall_ms)| {
            let mut rank = 0u32;
            let steps = step_rows.len();
            let trace: Vec<StepTrace> = step_rows
                .into_iter()
                .enumerate()
                .map(|(index, (id, rank_gap, similarity, vote))| {
                    rank += rank_gap;
                    let is_last = index + 1 == steps;
                    StepTrace {
                        category_id: id.into(),
                        retrieval_rank: rank,
                        similarity,
                        votes: vec![vote],
                        decision: if is_last && accept_last {
                            Decision::Accept
                        } else {
                            Decision::Reject
                        },
                    }
                })
                .collect();
            let outcome = match trace.last() {
                Some(last) if accept_last => Outcome::Labeled {
                    category_id: last.category_id.clone(),
                    step_rank: trace.len() as u32,
                },
                _ => Outcome::Abstained,
            };
            Prediction {
                sample_id: sample_id.into(),
                outcome,
                trace,
                llm_calls,
                wall_ms,
            }
        })
}

fn ledger_strategy() -> impl Strategy<Value = RunLedger> {
    proptest::collection::vec(
        (
            id_strategy(),
            prop_oneof![
                Just(LedgerOutcome::Labeled),
                Just(LedgerOutcome::Abstained),
                Just(LedgerOutcome::Errored)
            ],
            0u32..40,
            0u64..500,
            0u64..20,
            0u64..100_000,
        )
            .prop_map(|(id, outcome, steps, llm_calls, retries, wall_ms)| LedgerRow {
                sample_id: id.into(),
                outcome,
                steps,
                llm_calls,
                retries,
                wall_ms,
            }),
        0..12,
    )
    .prop_map(RunLedger::from_rows)
}

// -- round trips -----------------------------------------------------------

proptest! {
    #[test]
    fn predictions_round_trip_through_json(prediction in prediction_strategy()) {
        prop_assert_eq!(round_trip_json(&prediction), prediction);
    }

    #[test]
    fn prediction_lines_round_trip_through_the_file_format(
        predictions in proptest::collection::vec(consistent_prediction_strategy(), 0..6)
    ) {
        let mut file = String::new();
        for prediction in &predictions {
            let line = prediction_to_json_line(prediction).unwrap();
            prop_assert!(!line.contains('\n'), "a prediction line must stay one line");
            file.push_str(&line);
            file.push('\n');
        }
        let back = read_predictions(file.as_bytes()).unwrap();
        prop_assert_eq!(back, predictions);
    }

    #[test]
    fn schemas_round_trip_through_json(schema in schema_strategy()) {
        let json = serde_json::to_string(&schema).unwrap();
        prop_assert_eq!(parse_schema(&json).unwrap(), schema);
    }

    #[test]
    fn samples_round_trip_through_jsonl(samples in samples_strategy()) {
        let mut file = String::new();
        for sample in &samples {
            file.push_str(&serde_json::to_string(sample).unwrap());
            file.push('\n');
        }
        let back = read_samples(file.as_bytes()).unwrap();
        prop_assert_eq!(back, samples);
    }

    #[test]
    fn ledgers_round_trip_through_json(ledger in ledger_strategy()) {
        prop_assert_eq!(round_trip_json(&ledger), ledger);
    }
}

// -- format stability ------------------------------------------------------

#[test]
fn prediction_json_shape_is_stable() {
    let prediction = Prediction {
        sample_id: "s1".into(),
        outcome: Outcome::Labeled {
            category_id: "card_arrival".into(),
            step_rank: 1,
        },
        trace: vec![StepTrace {
            category_id: "card_arrival".into(),
            retrieval_rank: 1,
            similarity: 0.5,
            votes: vec![VoteRecord {
                variant: PromptVariant::NoCot,
                ordinal: 1,
                answer: BinaryAnswer::new(AnswerKind::Yes, "yes"),
            }],
            decision: Decision::Accept,
        }],
        llm_calls: 1,
        wall_ms: 20,
    };
    let line = prediction_to_json_line(&prediction).unwrap();
    assert_eq!(
        line,
        concat!(
            "{\"sample_id\":\"s1\",",
            "\"outcome\":{\"labeled\":{\"category_id\":\"card_arrival\",\"step_rank\":1}},",
            "\"trace\":[{\"category_id\":\"card_arrival\",\"retrieval_rank\":1,",
            "\"similarity\":0.5,",
            "\"votes\":[{\"variant\":\"no_cot\",\"ordinal\":1,",
            "\"answer\":{\"kind\":\"yes\",\"raw\":\"yes\"}}],",
            "\"decision\":\"accept\"}],",
            "\"llm_calls\":1,\"wall_ms\":20}"
        )
    );
}

#[test]
fn abstention_serializes_as_a_bare_tag() {
    let prediction = Prediction {
        sample_id: "s2".into(),
        outcome: Outcome::Abstained,
        trace: Vec::new(),
        llm_calls: 6,
        wall_ms: 12,
    };
    let line = prediction_to_json_line(&prediction).unwrap();
    assert_eq!(
        line,
        "{\"sample_id\":\"s2\",\"outcome\":\"abstained\",\"trace\":[],\"llm_calls\":6,\"wall_ms\":12}"
    );
}

#[test]
fn enum_tags_are_snake_case_strings() {
    assert_eq!(serde_json::to_string(&AnswerKind::Unparseable).unwrap(), "\"unparseable\"");
    assert_eq!(serde_json::to_string(&PromptVariant::NoCot).unwrap(), "\"no_cot\"");
    assert_eq!(serde_json::to_string(&Decision::Reject).unwrap(), "\"reject\"");
    assert_eq!(serde_json::to_string(&LedgerOutcome::Errored).unwrap(), "\"errored\"");
}

#[test]
fn gold_label_is_omitted_when_absent() {
    let bare = Sample::new("s1", "text");
    assert_eq!(
        serde_json::to_string(&bare).unwrap(),
        "{\"id\":\"s1\",\"text\":\"text\"}"
    );
    let gold = Sample::new("s1", "text").with_gold("c1");
    assert_eq!(
        serde_json::to_string(&gold).unwrap(),
        "{\"id\":\"s1\",\"text\":\"text\",\"gold\":\"c1\"}"
    );
    // Both shapes read back.
    let parsed = read_samples("{\"id\":\"s1\",\"text\":\"text\"}\n".as_bytes()).unwrap();
    assert_eq!(parsed[0].gold, None);
}

#[test]
fn ledger_means_are_null_when_every_sample_errored() {
    let ledger = RunLedger::from_rows(vec![LedgerRow {
        sample_id: "s1".into(),
        outcome: LedgerOutcome::Errored,
        steps: 0,
        llm_calls: 0,
        retries: 2,
        wall_ms: 9,
    }]);
    let json = serde_json::to_value(&ledger).unwrap();
    assert_eq!(json["means"], serde_json::Value::Null);
    assert_eq!(json["totals"]["errored"], 1);
    let back: RunLedger = serde_json::from_value(json).unwrap();
    assert_eq!(back, ledger);
}
