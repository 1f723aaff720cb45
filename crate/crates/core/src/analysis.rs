//! Vocabulary coverage and nearest-neighbor overlap between embedding spaces.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::corpus::{Split, VocabCounts};
use crate::embedding::{EmbeddingTable, LookupPolicy, Normalization};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimMismatch(usize, usize),
    #[error("query {0:?} is not in table {1:?}")]
    QueryAbsent(String, String),
    #[error("k = {k} out of range for table {table:?} (1..={max})")]
    KOutOfRange { k: usize, max: usize, table: String },
    #[error("no shared queries: none of the {0} queries resolve in both tables")]
    NoSharedQueries(usize),
    #[error("vocabulary counts are empty")]
    EmptyCounts,
}

/// Cosine similarity accumulated in double precision. A zero-norm operand
/// yields `-inf` so zero vectors rank last.
pub fn cosine(u: &[f32], v: &[f32]) -> Result<f64, AnalysisError> {
    if u.len() != v.len() {
        return Err(AnalysisError::DimMismatch(u.len(), v.len()));
    }
    Ok(cosine_with_norms(dot(u, v), norm(u), norm(v)))
}

// left fold from +0.0 so an all-zero product never yields -0.0
fn dot(u: &[f32], v: &[f32]) -> f64 {
    u.iter().zip(v).fold(0.0, |acc, (&a, &b)| acc + a as f64 * b as f64)
}

fn norm(u: &[f32]) -> f64 {
    dot(u, u).sqrt()
}

fn cosine_with_norms(dot: f64, nu: f64, nv: f64) -> f64 {
    if nu == 0.0 || nv == 0.0 {
        f64::NEG_INFINITY
    } else {
        dot / (nu * nv)
    }
}

/// `|a ∩ b| / |a ∪ b|`, 1.0 for two empty sets.
pub fn jaccard<T: Eq + Hash>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Neighbor {
    pub token: String,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NeighborSet {
    pub query: String,
    pub neighbors: Vec<Neighbor>,
}

impl NeighborSet {
    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.neighbors.iter().map(|n| n.token.as_str())
    }
}

const CHUNK_ROWS: usize = 8192;

/// Exhaustive cosine k-NN over one table with precomputed row norms.
///
/// The vocabulary is scanned in fixed-size chunks in parallel; each chunk
/// keeps its own top-k and the results are merged under a total order
/// (similarity descending, token ascending), so the output does not depend
/// on the thread count.
pub struct NeighborIndex<'t> {
    table: &'t EmbeddingTable,
    norms: Vec<f64>,
    candidates: Option<Vec<bool>>,
    n_candidates: usize,
}

impl<'t> NeighborIndex<'t> {
    pub fn new(table: &'t EmbeddingTable) -> Self {
        let norms = (0..table.len()).into_par_iter().map(|r| norm(table.row(r))).collect();
        NeighborIndex {
            table,
            norms,
            candidates: None,
            n_candidates: table.len(),
        }
    }

    /// Restrict neighbors to rows where `mask` is true.
    pub fn with_candidates(mut self, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), self.table.len());
        self.n_candidates = mask.iter().filter(|&&m| m).count();
        self.candidates = Some(mask);
        self
    }

    pub fn table(&self) -> &'t EmbeddingTable {
        self.table
    }

    /// Largest usable k (a query never neighbors itself).
    pub fn max_k(&self) -> usize {
        self.n_candidates.saturating_sub(1)
    }

    fn check_k(&self, k: usize) -> Result<(), AnalysisError> {
        if k == 0 || k > self.max_k() {
            return Err(AnalysisError::KOutOfRange {
                k,
                max: self.max_k(),
                table: self.table.name().to_owned(),
            });
        }
        Ok(())
    }

    fn order(&self, a: &(usize, f64), b: &(usize, f64)) -> Ordering {
        b.1.total_cmp(&a.1)
            .then_with(|| self.table.word(a.0).cmp(self.table.word(b.0)))
    }

    /// The `k` nearest rows to `query_row`, as `(row, similarity)`.
    pub fn knn_row(&self, query_row: usize, k: usize) -> Result<Vec<(usize, f64)>, AnalysisError> {
        self.check_k(k)?;
        let q = self.table.row(query_row);
        let qn = self.norms[query_row];
        let n = self.table.len();
        let chunks: Vec<Vec<(usize, f64)>> = (0..n.div_ceil(CHUNK_ROWS))
            .into_par_iter()
            .map(|c| {
                let rows = c * CHUNK_ROWS..((c + 1) * CHUNK_ROWS).min(n);
                let mut best: Vec<(usize, f64)> = rows
                    .filter(|&r| r != query_row)
                    .filter(|&r| self.candidates.as_ref().is_none_or(|m| m[r]))
                    .map(|r| (r, cosine_with_norms(dot(q, self.table.row(r)), qn, self.norms[r])))
                    .collect();
                top_k(&mut best, k, |a, b| self.order(a, b));
                best
            })
            .collect();
        let mut merged: Vec<(usize, f64)> = chunks.into_iter().flatten().collect();
        top_k(&mut merged, k, |a, b| self.order(a, b));
        Ok(merged)
    }

    pub fn knn(&self, query: &str, k: usize) -> Result<NeighborSet, AnalysisError> {
        let row = self
            .table
            .row_id(query)
            .ok_or_else(|| AnalysisError::QueryAbsent(query.to_owned(), self.table.name().to_owned()))?;
        self.neighbor_set(row, k)
    }

    fn neighbor_set(&self, row: usize, k: usize) -> Result<NeighborSet, AnalysisError> {
        let neighbors = self
            .knn_row(row, k)?
            .into_iter()
            .map(|(r, similarity)| Neighbor {
                token: self.table.word(r).to_owned(),
                similarity,
            })
            .collect();
        Ok(NeighborSet {
            query: self.table.word(row).to_owned(),
            neighbors,
        })
    }
}

fn top_k<T>(items: &mut Vec<T>, k: usize, cmp: impl Fn(&T, &T) -> Ordering) {
    if items.len() > k {
        items.select_nth_unstable_by(k - 1, &cmp);
        items.truncate(k);
    }
    items.sort_unstable_by(&cmp);
}

/// Exact k-nearest neighbors of `query` by cosine similarity, excluding the
/// query itself.
pub fn knn(table: &EmbeddingTable, query: &str, k: usize) -> Result<NeighborSet, AnalysisError> {
    NeighborIndex::new(table).knn(query, k)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SkippedQuery {
    pub token: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SimilarityReport {
    pub table_a: String,
    pub table_b: String,
    pub k: usize,
    pub mean_jaccard_pct: f64,
    pub n_requested: usize,
    pub n_used: usize,
    pub n_skipped: usize,
    pub per_query: BTreeMap<String, f64>,
    pub skipped: Vec<SkippedQuery>,
}

#[derive(Clone, Debug, Serialize)]
pub struct SimilarityOptions {
    pub k: usize,
    pub policy: LookupPolicy,
    /// Draw neighbors only from tokens attested in both tables.
    pub shared_vocab: bool,
}

impl Default for SimilarityOptions {
    fn default() -> Self {
        SimilarityOptions {
            k: 10,
            policy: LookupPolicy::default(),
            shared_vocab: false,
        }
    }
}

fn shared_mask(table: &EmbeddingTable, other: &EmbeddingTable, policy: &LookupPolicy) -> Vec<bool> {
    table
        .words()
        .par_iter()
        .map(|w| policy.resolve(other, w).is_some())
        .collect()
}

/// Mean Jaccard overlap (as a percentage) between each query's k-nearest
/// neighbor sets in two tables.
pub fn embedding_similarity(
    a: &EmbeddingTable,
    b: &EmbeddingTable,
    queries: &[String],
    options: &SimilarityOptions,
) -> Result<SimilarityReport, AnalysisError> {
    let (index_a, index_b) = if options.shared_vocab {
        (
            NeighborIndex::new(a).with_candidates(shared_mask(a, b, &options.policy)),
            NeighborIndex::new(b).with_candidates(shared_mask(b, a, &options.policy)),
        )
    } else {
        (NeighborIndex::new(a), NeighborIndex::new(b))
    };
    similarity_with_indexes(&index_a, &index_b, queries, options)
}

pub fn similarity_with_indexes(
    index_a: &NeighborIndex<'_>,
    index_b: &NeighborIndex<'_>,
    queries: &[String],
    options: &SimilarityOptions,
) -> Result<SimilarityReport, AnalysisError> {
    index_a.check_k(options.k)?;
    index_b.check_k(options.k)?;
    let (a, b) = (index_a.table(), index_b.table());
    let key = options.policy.key_normalization();
    let neighbor_keys = |set: Vec<(usize, f64)>, table: &EmbeddingTable| -> HashSet<String> {
        set.into_iter()
            .map(|(r, _)| key.apply(table.word(r)).into_owned())
            .collect()
    };

    let outcomes: Vec<Result<f64, String>> = queries
        .par_iter()
        .map(|q| {
            let in_a = options.policy.resolve(a, q);
            let in_b = options.policy.resolve(b, q);
            let (row_a, row_b) = match (in_a, in_b) {
                (Some((ra, _)), Some((rb, _))) => (ra, rb),
                (None, None) => return Ok(Err(format!("absent from {} and {}", a.name(), b.name()))),
                (None, _) => return Ok(Err(format!("absent from {}", a.name()))),
                (_, None) => return Ok(Err(format!("absent from {}", b.name()))),
            };
            if index_a.candidates.as_ref().is_some_and(|m| !m[row_a])
                || index_b.candidates.as_ref().is_some_and(|m| !m[row_b])
            {
                return Ok(Err("outside shared vocabulary".to_owned()));
            }
            let na = neighbor_keys(index_a.knn_row(row_a, options.k)?, a);
            let nb = neighbor_keys(index_b.knn_row(row_b, options.k)?, b);
            Ok(Ok(jaccard(&na, &nb)))
        })
        .collect::<Result<_, AnalysisError>>()?;

    let mut per_query = BTreeMap::new();
    let mut skipped = Vec::new();
    let mut sum = 0.0;
    let mut n_used = 0;
    for (q, outcome) in queries.iter().zip(outcomes) {
        match outcome {
            Ok(j) => {
                sum += j;
                n_used += 1;
                per_query.insert(q.clone(), j);
            }
            Err(reason) => skipped.push(SkippedQuery {
                token: q.clone(),
                reason,
            }),
        }
    }
    if n_used == 0 {
        return Err(AnalysisError::NoSharedQueries(queries.len()));
    }
    Ok(SimilarityReport {
        table_a: a.name().to_owned(),
        table_b: b.name().to_owned(),
        k: options.k,
        mean_jaccard_pct: 100.0 * sum / n_used as f64,
        n_requested: queries.len(),
        n_used,
        n_skipped: skipped.len(),
        per_query,
        skipped,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CoverageReport {
    pub table: String,
    pub split: Split,
    pub unique_types: usize,
    pub attested_types: usize,
    pub attested_pct: f64,
    pub total_tokens: u64,
    pub attested_tokens: u64,
    pub token_coverage_pct: f64,
    /// Attested types per lookup step that matched.
    pub matched_by: BTreeMap<Normalization, usize>,
}

/// Share of the dataset's unique types (and running tokens) that resolve in
/// `table` under `policy`.
pub fn coverage(
    counts: &VocabCounts,
    table: &EmbeddingTable,
    policy: &LookupPolicy,
    split: Split,
) -> Result<CoverageReport, AnalysisError> {
    if counts.is_empty() {
        return Err(AnalysisError::EmptyCounts);
    }
    let mut attested_types = 0;
    let mut attested_tokens = 0;
    let mut matched_by = BTreeMap::new();
    for (ty, count) in counts.iter() {
        if let Some((_, kind)) = policy.resolve(table, ty) {
            attested_types += 1;
            attested_tokens += count;
            *matched_by.entry(kind).or_insert(0) += 1;
        }
    }
    let unique_types = counts.num_types();
    Ok(CoverageReport {
        table: table.name().to_owned(),
        split,
        unique_types,
        attested_types,
        attested_pct: 100.0 * attested_types as f64 / unique_types as f64,
        total_tokens: counts.total_tokens(),
        attested_tokens,
        token_coverage_pct: 100.0 * attested_tokens as f64 / counts.total_tokens() as f64,
        matched_by,
    })
}

/// One row of an overlap/attestation comparison: `candidate` measured
/// against the `reference` table on a train and a dev split.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairReport {
    pub reference: String,
    pub candidate: String,
    pub k: usize,
    pub top_n: usize,
    pub overlap_train: f64,
    pub overlap_dev: f64,
    pub attested_train: f64,
    pub attested_dev: f64,
    pub similarity_train: SimilarityReport,
    pub similarity_dev: SimilarityReport,
    pub coverage_train: CoverageReport,
    pub coverage_dev: CoverageReport,
}

pub fn pair_report(
    reference: &EmbeddingTable,
    candidate: &EmbeddingTable,
    train: &VocabCounts,
    dev: &VocabCounts,
    top_n: usize,
    options: &SimilarityOptions,
) -> Result<PairReport, AnalysisError> {
    let (index_a, index_b) = if options.shared_vocab {
        (
            NeighborIndex::new(reference).with_candidates(shared_mask(reference, candidate, &options.policy)),
            NeighborIndex::new(candidate).with_candidates(shared_mask(candidate, reference, &options.policy)),
        )
    } else {
        (NeighborIndex::new(reference), NeighborIndex::new(candidate))
    };
    pair_report_with_indexes(&index_a, &index_b, train, dev, top_n, options)
}

pub fn pair_report_with_indexes(
    reference: &NeighborIndex<'_>,
    candidate: &NeighborIndex<'_>,
    train: &VocabCounts,
    dev: &VocabCounts,
    top_n: usize,
    options: &SimilarityOptions,
) -> Result<PairReport, AnalysisError> {
    if train.is_empty() || dev.is_empty() {
        return Err(AnalysisError::EmptyCounts);
    }
    let similarity_train = similarity_with_indexes(reference, candidate, &train.top_n_types(top_n), options)?;
    let similarity_dev = similarity_with_indexes(reference, candidate, &dev.top_n_types(top_n), options)?;
    let coverage_train = coverage(train, candidate.table(), &options.policy, Split::Train)?;
    let coverage_dev = coverage(dev, candidate.table(), &options.policy, Split::Dev)?;
    Ok(PairReport {
        reference: reference.table().name().to_owned(),
        candidate: candidate.table().name().to_owned(),
        k: options.k,
        top_n,
        overlap_train: similarity_train.mean_jaccard_pct,
        overlap_dev: similarity_dev.mean_jaccard_pct,
        attested_train: coverage_train.attested_pct,
        attested_dev: coverage_dev.attested_pct,
        similarity_train,
        similarity_dev,
        coverage_train,
        coverage_dev,
    })
}
