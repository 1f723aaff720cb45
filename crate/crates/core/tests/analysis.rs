mod common;

use std::collections::HashSet;

use common::*;
use embcat::analysis::{cosine, coverage, embedding_similarity, jaccard, knn, SimilarityOptions};
use embcat::corpus::{Split, VocabCounts};
use embcat::embedding::{EmbeddingTable, LookupPolicy, Normalization};
use rand::Rng;

fn table(name: &str, rows: &[(&str, [f32; 2])]) -> EmbeddingTable {
    EmbeddingTable::from_rows(name, rows.iter().map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
}

fn exact(k: usize) -> SimilarityOptions {
    SimilarityOptions {
        k,
        policy: LookupPolicy::exact(),
        shared_vocab: false,
    }
}

#[test]
fn six_word_overlap_by_hand() {
    let a = table(
        "a",
        &[
            ("w1", [1.0, 0.0]),
            ("w2", [0.9, 0.1]),
            ("w3", [0.8, 0.3]),
            ("w4", [0.0, 1.0]),
            ("w5", [-1.0, 0.0]),
            ("w6", [0.0, -1.0]),
        ],
    );
    let b = table(
        "b",
        &[
            ("w1", [1.0, 0.0]),
            ("w2", [0.9, 0.1]),
            ("w3", [0.0, 1.0]),
            ("w4", [0.8, 0.3]),
            ("w5", [-1.0, 0.0]),
            ("w6", [0.0, -1.0]),
        ],
    );
    // A: {w2, w3}, B: {w2, w4} -> 1/3
    let r = embedding_similarity(&a, &b, &["w1".into()], &exact(2)).unwrap();
    assert!((r.mean_jaccard_pct - 100.0 / 3.0).abs() < 1e-12);
    assert_eq!(r.mean_jaccard_pct, oracle_overlap(&a, &b, &["w1"], 2));
}

#[test]
fn overlap_matches_oracle_on_random_tables() {
    for seed in 0..25 {
        let mut r = rng(500 + seed);
        let vocab = r.gen_range(12..200);
        let dim = r.gen_range(1..10);
        let a = random_table(&mut r, "a", vocab, dim, Values::SmallInts);
        let vb: Vec<f32> = (0..vocab * dim).map(|_| r.gen_range(-2i32..=2) as f32).collect();
        let b = EmbeddingTable::new("b", dim, a.words().to_vec(), vb).unwrap();
        let queries: Vec<&str> = a.words().iter().take(30).map(String::as_str).collect();
        let owned: Vec<String> = queries.iter().map(|q| q.to_string()).collect();
        let report = embedding_similarity(&a, &b, &owned, &exact(10)).unwrap();
        let want = oracle_overlap(&a, &b, &queries, 10);
        assert!(
            (report.mean_jaccard_pct - want).abs() < 1e-9,
            "seed {seed}: {} vs {want}",
            report.mean_jaccard_pct
        );
    }
}

#[test]
fn unresolvable_queries_are_skipped_and_recorded() {
    let a = table("a", &[("x", [1.0, 0.0]), ("y", [0.0, 1.0]), ("z", [1.0, 1.0])]);
    let b = table("b", &[("x", [1.0, 0.0]), ("y", [0.0, 1.0])]);
    let r = embedding_similarity(&a, &b, &["x".into(), "z".into(), "q".into()], &exact(1)).unwrap();
    assert_eq!((r.n_requested, r.n_used, r.n_skipped), (3, 1, 2));
    let skipped: HashSet<&str> = r.skipped.iter().map(|s| s.token.as_str()).collect();
    assert_eq!(skipped, HashSet::from(["z", "q"]));
}

#[test]
fn shared_vocab_restricts_candidates() {
    let a = table("a", &[("x", [1.0, 0.0]), ("near", [1.0, 0.01]), ("y", [0.5, 0.5])]);
    let b = table("b", &[("x", [1.0, 0.0]), ("y", [0.5, 0.5])]);
    let mut opts = exact(1);
    let plain = embedding_similarity(&a, &b, &["x".into()], &opts).unwrap();
    assert_eq!(plain.mean_jaccard_pct, 0.0);
    opts.shared_vocab = true;
    let shared = embedding_similarity(&a, &b, &["x".into()], &opts).unwrap();
    assert_eq!(shared.mean_jaccard_pct, 100.0);
}

#[test]
fn zero_vectors_rank_last() {
    let t = table("t", &[("q", [1.0, 0.0]), ("zero", [0.0, 0.0]), ("far", [-1.0, 0.0])]);
    let n = knn(&t, "q", 2).unwrap();
    assert_eq!(n.tokens().collect::<Vec<_>>(), ["far", "zero"]);
    assert_eq!(n.neighbors[1].similarity, f64::NEG_INFINITY);
    assert!(cosine(&[1.0], &[1.0, 2.0]).is_err());
}

#[test]
fn jaccard_of_empty_sets_is_one() {
    let e: HashSet<&str> = HashSet::new();
    assert_eq!(jaccard(&e, &e), 1.0);
    assert_eq!(jaccard(&HashSet::from([1]), &HashSet::from([2])), 0.0);
}

#[test]
fn coverage_counts_types_and_tokens() {
    let t = table("t", &[("the", [1.0, 0.0]), ("Paris", [0.0, 1.0])]);
    let counts = VocabCounts::from_tokens(["the", "The", "Paris", "paris", "zzz"], Normalization::Exact);
    let c = coverage(&counts, &t, &LookupPolicy::lowercase_chain(), Split::Dev).unwrap();
    // exact: the, Paris; lowercase: The -> the; "paris" and "zzz" unattested
    assert_eq!((c.unique_types, c.attested_types), (5, 3));
    assert!((c.attested_pct - 60.0).abs() < 1e-12);
    assert_eq!(c.matched_by.get(&Normalization::Exact), Some(&2));
    assert_eq!(c.matched_by.get(&Normalization::Lowercase), Some(&1));
    assert_eq!(c.split, Split::Dev);
}
