//! Test-only generators and reference implementations. Nothing here calls
//! into the library's search, scoring, or counting code paths.
#![allow(dead_code)]

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::path::PathBuf;

use embcat::embedding::EmbeddingTable;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

const ALPHABET: &[&str] = &["a", "b", "k", "z", "é", "ß", "ж", "東", "京", "🙂", "q", "x"];

/// Unique random tokens mixing ASCII and multi-byte UTF-8.
pub fn random_words(rng: &mut ChaCha8Rng, n: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let len = rng.gen_range(1..=6);
        let w: String = (0..len).map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())]).collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

#[derive(Clone, Copy, Debug)]
pub enum Values {
    /// Uniform in [-1, 1).
    Continuous,
    /// Integers in [-2, 2]; produces many exact cosine ties.
    SmallInts,
}

/// Random table; a few rows duplicate earlier rows so exact ties occur, and
/// occasionally a zero row is planted.
pub fn random_table(rng: &mut ChaCha8Rng, name: &str, vocab: usize, dim: usize, values: Values) -> EmbeddingTable {
    let words = random_words(rng, vocab);
    let mut vectors: Vec<f32> = Vec::with_capacity(vocab * dim);
    for row in 0..vocab {
        if row > 0 && rng.gen_bool(0.05) {
            let src = rng.gen_range(0..row);
            let copy: Vec<f32> = vectors[src * dim..(src + 1) * dim].to_vec();
            vectors.extend(copy);
            continue;
        }
        if rng.gen_bool(0.01) {
            vectors.extend(std::iter::repeat_n(0.0, dim));
            continue;
        }
        for _ in 0..dim {
            vectors.push(match values {
                Values::Continuous => rng.gen_range(-1.0f32..1.0),
                Values::SmallInts => rng.gen_range(-2i32..=2) as f32,
            });
        }
    }
    EmbeddingTable::new(name, dim, words, vectors).unwrap()
}

/// Cosine as `dot / (|u| |v|)` in f64, `-inf` for a zero operand.
pub fn oracle_cosine(u: &[f32], v: &[f32]) -> f64 {
    let mut dot = 0.0f64;
    for i in 0..u.len() {
        dot += u[i] as f64 * v[i] as f64;
    }
    let mut nu = 0.0f64;
    for x in u {
        nu += *x as f64 * *x as f64;
    }
    let mut nv = 0.0f64;
    for x in v {
        nv += *x as f64 * *x as f64;
    }
    let (nu, nv) = (nu.sqrt(), nv.sqrt());
    if nu == 0.0 || nv == 0.0 {
        f64::NEG_INFINITY
    } else {
        dot / (nu * nv)
    }
}

/// Score every other row, fully sort (similarity desc, token asc), take k.
pub fn oracle_knn(table: &EmbeddingTable, query: &str, k: usize) -> Vec<(String, f64)> {
    let q = table.get(query).unwrap();
    let mut all: Vec<(String, f64)> = table
        .iter()
        .filter(|(w, _)| *w != query)
        .map(|(w, v)| (w.to_owned(), oracle_cosine(q, v)))
        .collect();
    all.sort_by(|a, b| match b.1.partial_cmp(&a.1).unwrap() {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    all.truncate(k);
    all
}

/// Mean Jaccard percentage via full enumeration.
pub fn oracle_overlap(a: &EmbeddingTable, b: &EmbeddingTable, queries: &[&str], k: usize) -> f64 {
    let mut sum = 0.0;
    for q in queries {
        let na: HashSet<String> = oracle_knn(a, q, k).into_iter().map(|(w, _)| w).collect();
        let nb: HashSet<String> = oracle_knn(b, q, k).into_iter().map(|(w, _)| w).collect();
        let inter = na.iter().filter(|w| nb.contains(*w)).count();
        let union = na.len() + nb.len() - inter;
        sum += inter as f64 / union as f64;
    }
    100.0 * sum / queries.len() as f64
}

/// One-pass count then an independent sort.
pub fn oracle_top_n<'a>(tokens: impl IntoIterator<Item = &'a str>, n: usize) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in tokens {
        *counts.entry(t).or_default() += 1;
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    // BTreeMap order is already token-ascending; a stable sort keeps it for ties
    ranked.sort_by_key(|&(_, c)| std::cmp::Reverse(c));
    ranked.into_iter().take(n).map(|(t, _)| t.to_owned()).collect()
}

/// conlleval chunk logic transcribed with string tags.
pub fn oracle_conlleval_chunks(tags: &[&str]) -> Vec<(String, usize, usize)> {
    fn split(tag: &str) -> (&str, &str) {
        if tag == "O" {
            ("O", "")
        } else {
            tag.split_once('-').unwrap()
        }
    }
    fn end_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
        (prev_tag == "E" || prev_tag == "S")
            || (prev_tag == "B" && (tag == "B" || tag == "S" || tag == "O"))
            || (prev_tag == "I" && (tag == "B" || tag == "S" || tag == "O"))
            || (prev_tag != "O" && prev_type != ty)
    }
    fn start_of_chunk(prev_tag: &str, tag: &str, prev_type: &str, ty: &str) -> bool {
        (tag == "B" || tag == "S")
            || ((prev_tag == "E" || prev_tag == "S" || prev_tag == "O") && (tag == "E" || tag == "I"))
            || (tag != "O" && prev_type != ty)
    }
    let mut chunks = Vec::new();
    let (mut prev_tag, mut prev_type) = ("O", "");
    let mut start: Option<usize> = None;
    for (i, t) in tags.iter().enumerate() {
        let (tag, ty) = split(t);
        if start.is_some() && end_of_chunk(prev_tag, tag, prev_type, ty) {
            chunks.push((prev_type.to_owned(), start.take().unwrap(), i));
        }
        if start_of_chunk(prev_tag, tag, prev_type, ty) && tag != "O" {
            start = Some(i);
        }
        prev_tag = tag;
        prev_type = ty;
    }
    if let Some(s) = start {
        chunks.push((prev_type.to_owned(), s, tags.len()));
    }
    chunks
}
