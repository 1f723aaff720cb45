use embcat::analysis::SimilarityOptions;
use embcat::combine::{
    combine, recommend, CombineError, CombineOptions, CombinePolicy, ModelVocab, PolicyKind, Thresholds, PAD_TOKEN,
    UNK_TOKEN,
};
use embcat::corpus::{Split, VocabCounts};
use embcat::embedding::{EmbeddingTable, LookupPolicy, Normalization, RandomBackfill};

fn table(name: &str, rows: &[(&str, &[f32])]) -> EmbeddingTable {
    EmbeddingTable::from_rows(name, rows.iter().map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
}

fn vocab(tokens: &[&str]) -> ModelVocab {
    let counts = VocabCounts::from_tokens(tokens.iter().copied(), Normalization::Lowercase);
    ModelVocab::from_counts(&counts, 1, vec![Split::Train]).unwrap()
}

#[test]
fn concat_uses_lookup_chain_and_backfill() {
    let a = table("a", &[("paris", &[1.0, 2.0]), ("the", &[3.0, 4.0])]);
    let b = table("b", &[("Paris", &[9.0])]);
    let v = vocab(&["Paris", "the", "zzz"]);
    let backfill = RandomBackfill::with_seed(3);
    let out = combine(
        &[a, b],
        &v,
        &CombinePolicy::concat(),
        &LookupPolicy::lowercase_chain(),
        &backfill,
        &CombineOptions::default(),
    )
    .unwrap();
    assert_eq!(out.table.name(), "a+b");
    assert_eq!(out.table.dim(), 3);
    // vocab is lowercased, so "paris" matches a exactly and misses b's "Paris"
    assert_eq!(out.table.get("paris").unwrap()[..2], [1.0, 2.0]);
    assert_eq!(
        out.table.get("paris").unwrap()[2..],
        backfill.vector("b", "paris", 1)[..]
    );
    assert_eq!(out.table.get("zzz").unwrap()[..2], backfill.vector("a", "zzz", 2)[..]);
    assert_eq!(out.sources[0].looked_up + out.sources[0].backfilled, v.len());
    assert_eq!(out.sources[1].backfilled, 3);
}

#[test]
fn special_tokens_come_first() {
    let a = table("a", &[("x", &[1.0])]);
    let opts = CombineOptions {
        name: Some("mine".into()),
        special_tokens: true,
    };
    let out = combine(
        &[a],
        &vocab(&["x"]),
        &CombinePolicy::concat(),
        &LookupPolicy::exact(),
        &RandomBackfill::default(),
        &opts,
    )
    .unwrap();
    assert_eq!(out.table.name(), "mine");
    assert_eq!(out.table.words(), [PAD_TOKEN, UNK_TOKEN, "x"]);
    assert_eq!(out.table.get(PAD_TOKEN), Some(&[0.0f32][..]));
}

#[test]
fn invalid_inputs_are_rejected() {
    let a = table("a", &[("x", &[1.0])]);
    let v = vocab(&["x"]);
    let run = |tables: &[EmbeddingTable], policy: CombinePolicy| {
        combine(
            tables,
            &v,
            &policy,
            &LookupPolicy::exact(),
            &RandomBackfill::default(),
            &CombineOptions::default(),
        )
    };
    assert!(matches!(
        run(&[a.clone(), a.clone()], CombinePolicy::concat()),
        Err(CombineError::NameCollision(_))
    ));
    assert!(run(
        std::slice::from_ref(&a),
        CombinePolicy::ablation(PolicyKind::RandomSecond, 1)
    )
    .is_err());
    let b = table("b", &[("x", &[2.0])]);
    assert!(run(&[a, b], CombinePolicy::ablation(PolicyKind::MatchedSecond, 5)).is_err());
    assert!(run(&[], CombinePolicy::concat()).is_err());
}

#[test]
fn policy_names_parse() {
    for (s, k) in [
        ("concat", PolicyKind::Concat),
        ("random-second", PolicyKind::RandomSecond),
        ("complement-second", PolicyKind::ComplementSecond),
        ("matched-second", PolicyKind::MatchedSecond),
    ] {
        assert_eq!(s.parse::<PolicyKind>().unwrap(), k);
        assert_eq!(k.to_string(), s);
    }
    assert!("bogus".parse::<PolicyKind>().is_err());
}

#[test]
fn recommend_ranks_and_thresholds() {
    // identical geometry -> overlap 100; rotated-away geometry -> low overlap
    let words = ["a", "b", "c", "d", "e", "f"];
    let base: Vec<[f32; 2]> = vec![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0], [-1.0, 0.0], [0.1, 0.9], [0.0, -1.0]];
    let other: Vec<[f32; 2]> = vec![[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.9, 0.1], [0.0, -1.0], [0.1, 0.9]];
    let mk = |name: &str, vs: &[[f32; 2]]| {
        EmbeddingTable::from_rows(name, words.iter().zip(vs).map(|(w, v)| (w.to_string(), v.to_vec()))).unwrap()
    };
    let t1 = mk("one", &base);
    let t2 = mk("copy", &base);
    let t3 = mk("other", &other);
    let counts = VocabCounts::from_tokens(words, Normalization::Lowercase);
    let opts = SimilarityOptions {
        k: 1,
        ..Default::default()
    };
    let verdicts = recommend(&[t1, t2, t3], &counts, &counts, &Thresholds::default(), 200, &opts).unwrap();
    assert_eq!(verdicts.len(), 3);
    let copy = verdicts
        .iter()
        .find(|v| v.first == "one" && v.second == "copy")
        .unwrap();
    assert_eq!(copy.overlap_train, 100.0);
    assert!(!copy.recommended);
    assert!(verdicts[0].recommended);
    assert!(verdicts.windows(2).all(|w| w[0].recommended >= w[1].recommended));
    assert!(matches!(
        recommend(
            &[table("x", &[("a", &[1.0])])],
            &counts,
            &counts,
            &Thresholds::default(),
            200,
            &opts
        ),
        Err(CombineError::TooFewTables { .. })
    ));
}
