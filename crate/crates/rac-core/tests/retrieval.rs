//! Property-based checks of ranking and similarity: scale invariance,
//! permutation behavior, agreement with a brute-force reference, MRR
//! bounds, and byte-stable index serialization.

use proptest::prelude::*;
use rac_core::retrieval::{
    cosine_similarity, load_index, mrr_at_k, rank_categories, save_index, CategoryIndex,
    EmbeddingVector, IndexEntry, ReprMode,
};
use rac_core::types::CategoryId;

fn finite_component() -> impl Strategy<Value = f32> {
    // Away from zero so norms stay comfortably non-zero; small enough to
    // avoid f32 overflow in products.
    prop_oneof![-100.0f32..-0.01, 0.01f32..100.0]
}

fn vector_of(dim: usize) -> impl Strategy<Value = Vec<f32>> {
    proptest::collection::vec(finite_component(), dim)
}

fn index_entries(dim: usize, count: usize) -> impl Strategy<Value = Vec<Vec<f32>>> {
    proptest::collection::vec(vector_of(dim), count)
}

fn build(entries: Vec<Vec<f32>>) -> CategoryIndex {
    let entries: Vec<IndexEntry> = entries
        .into_iter()
        .enumerate()
        .map(|(i, values)| IndexEntry {
            category_id: CategoryId::new(format!("c{i:03}")),
            vector: EmbeddingVector::new(values).unwrap(),
        })
        .collect();
    CategoryIndex::new(ReprMode::L, "prop-embedder", entries).unwrap()
}

/// Brute-force reference: compute all similarities, sort descending with
/// ascending-id tiebreak, return ids.
fn reference_order(index: &CategoryIndex, query: &EmbeddingVector) -> Vec<String> {
    let mut scored: Vec<(f64, String)> = index
        .entries()
        .iter()
        .map(|entry| {
            (
                cosine_similarity(query, &entry.vector).unwrap(),
                entry.category_id.as_str().to_owned(),
            )
        })
        .collect();
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.into_iter().map(|(_, id)| id).collect()
}

proptest! {
    #[test]
    fn cosine_is_symmetric_and_bounded((a, b) in (2usize..6).prop_flat_map(|d| (vector_of(d), vector_of(d)))) {
        let a = EmbeddingVector::new(a).unwrap();
        let b = EmbeddingVector::new(b).unwrap();
        let ab = cosine_similarity(&a, &b).unwrap();
        let ba = cosine_similarity(&b, &a).unwrap();
        prop_assert_eq!(ab, ba);
        prop_assert!((-1.0 - 1e-9..=1.0 + 1e-9).contains(&ab));
    }

    #[test]
    fn cosine_of_a_vector_with_itself_is_one(values in (2usize..6).prop_flat_map(vector_of)) {
        let v = EmbeddingVector::new(values).unwrap();
        let sim = cosine_similarity(&v, &v).unwrap();
        prop_assert!((sim - 1.0).abs() < 1e-6);
    }

    /// Scaling the query by any positive factor leaves the ranking
    /// untouched: cosine only sees direction.
    #[test]
    fn ranking_is_scale_invariant(
        (entries, query, scale) in (2usize..5, 2usize..8).prop_flat_map(|(d, n)| {
            (index_entries(d, n), vector_of(d), 0.01f32..50.0)
        })
    ) {
        let index = build(entries);
        let base = rank_categories(&index, &EmbeddingVector::new(query.clone()).unwrap()).unwrap();
        let scaled: Vec<f32> = query.iter().map(|v| v * scale).collect();
        let scaled = rank_categories(&index, &EmbeddingVector::new(scaled).unwrap()).unwrap();
        let ids = |list: &rac_core::retrieval::RankedList| -> Vec<String> {
            list.candidates().iter().map(|c| c.category_id.as_str().to_owned()).collect()
        };
        prop_assert_eq!(ids(&base), ids(&scaled));
    }

    /// The ranked list is exactly the brute-force descending sort and
    /// contains every entry once.
    #[test]
    fn ranking_matches_brute_force(
        (entries, query) in (2usize..5, 1usize..10).prop_flat_map(|(d, n)| {
            (index_entries(d, n), vector_of(d))
        })
    ) {
        let index = build(entries);
        let query = EmbeddingVector::new(query).unwrap();
        let ranked = rank_categories(&index, &query).unwrap();
        let got: Vec<String> = ranked
            .candidates()
            .iter()
            .map(|c| c.category_id.as_str().to_owned())
            .collect();
        prop_assert_eq!(got, reference_order(&index, &query));
        prop_assert_eq!(ranked.len(), index.len());
        // Similarities are non-increasing.
        let sims: Vec<f64> = ranked.candidates().iter().map(|c| c.similarity).collect();
        prop_assert!(sims.windows(2).all(|w| w[0] >= w[1]));
    }

    /// Ranking twice gives the same answer: no hidden state.
    #[test]
    fn ranking_is_deterministic(
        (entries, query) in (2usize..5, 1usize..8).prop_flat_map(|(d, n)| {
            (index_entries(d, n), vector_of(d))
        })
    ) {
        let index = build(entries);
        let query = EmbeddingVector::new(query).unwrap();
        prop_assert_eq!(
            rank_categories(&index, &query).unwrap(),
            rank_categories(&index, &query).unwrap()
        );
    }

    /// MRR is within [0, 1], non-decreasing in k, and equals the
    /// brute-force mean of reciprocal ranks clipped at k.
    #[test]
    fn mrr_matches_brute_force_and_grows_with_k(
        ranks in proptest::collection::vec(proptest::option::of(1usize..20), 1..40),
        k in 1usize..25,
    ) {
        let got = mrr_at_k(&ranks, k).unwrap();
        let reference: f64 = ranks
            .iter()
            .map(|rank| match rank {
                Some(r) if *r <= k => 1.0 / *r as f64,
                _ => 0.0,
            })
            .sum::<f64>() / ranks.len() as f64;
        prop_assert!((got - reference).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&got));
        if k > 1 {
            let smaller = mrr_at_k(&ranks, k - 1).unwrap();
            prop_assert!(got >= smaller);
        }
    }

    /// Save → load is lossless for any index, and the bytes are a pure
    /// function of the index.
    #[test]
    fn index_io_round_trips(
        (entries, mode) in (2usize..5, 1usize..8).prop_flat_map(|(d, n)| {
            (index_entries(d, n), prop_oneof![
                Just(ReprMode::L),
                Just(ReprMode::D),
                Just(ReprMode::LplusD),
            ])
        })
    ) {
        let entries: Vec<IndexEntry> = entries
            .into_iter()
            .enumerate()
            .map(|(i, values)| IndexEntry {
                category_id: CategoryId::new(format!("c{i:03}")),
                vector: EmbeddingVector::new(values).unwrap(),
            })
            .collect();
        let index = CategoryIndex::new(mode, "prop-embedder", entries).unwrap();
        let mut bytes = Vec::new();
        save_index(&mut bytes, &index).unwrap();
        let reloaded = load_index(&mut bytes.as_slice()).unwrap();
        prop_assert_eq!(&reloaded, &index);
        let mut again = Vec::new();
        save_index(&mut again, &reloaded).unwrap();
        prop_assert_eq!(bytes, again);
    }
}

#[test]
fn equal_similarities_order_by_id_not_schema_position() {
    // Two identical vectors listed in reverse id order: ranks resolve by
    // ascending id, not by entry position.
    let entries = vec![
        IndexEntry {
            category_id: CategoryId::new("zeta"),
            vector: EmbeddingVector::new(vec![1.0, 0.0]).unwrap(),
        },
        IndexEntry {
            category_id: CategoryId::new("alpha"),
            vector: EmbeddingVector::new(vec![1.0, 0.0]).unwrap(),
        },
        IndexEntry {
            category_id: CategoryId::new("middle"),
            vector: EmbeddingVector::new(vec![0.0, 1.0]).unwrap(),
        },
    ];
    let index = CategoryIndex::new(ReprMode::L, "tie-embedder", entries).unwrap();
    let query = EmbeddingVector::new(vec![1.0, 0.1]).unwrap();
    let ranked = rank_categories(&index, &query).unwrap();
    let ids: Vec<&str> = ranked
        .candidates()
        .iter()
        .map(|c| c.category_id.as_str())
        .collect();
    assert_eq!(ids, vec!["alpha", "zeta", "middle"]);
    assert_eq!(ranked.rank_of(&CategoryId::new("zeta")), Some(2));
}

#[test]
fn mrr_counts_misses_and_deep_ranks_as_zero() {
    // Ranks 1, 2, and 4 with k = 4: (1 + 1/2 + 1/4) / 3.
    let ranks = [Some(1), Some(2), Some(4)];
    assert_eq!(mrr_at_k(&ranks, 4).unwrap(), 0.5833333333333334);
    // k = 3 pushes rank 4 out of the window: (1 + 1/2) / 3.
    assert_eq!(mrr_at_k(&ranks, 3).unwrap(), 0.5);

    // A missing rank contributes zero but stays in the denominator.
    let with_miss = [Some(1), Some(2), None, Some(4)];
    assert_eq!(mrr_at_k(&with_miss, 4).unwrap(), 0.4375);
    assert_eq!(mrr_at_k(&with_miss, 3).unwrap(), 0.375);
}
