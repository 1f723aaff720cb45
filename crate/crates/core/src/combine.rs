//! Concatenated embedding tables over a dataset vocabulary, the ablation
//! variants of the second table, and pair recommendation.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::analysis::{self, AnalysisError, NeighborIndex, SimilarityOptions};
use crate::corpus::{Dataset, Split, VocabCounts};
use crate::embedding::{EmbeddingError, EmbeddingTable, LookupPolicy, Normalization, RandomBackfill};

#[derive(Debug, Error)]
pub enum CombineError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("model vocabulary is empty")]
    EmptyVocab,
    #[error("duplicate table name {0:?}")]
    NameCollision(String),
    #[error("need at least {needed} tables, got {got}")]
    TooFewTables { needed: usize, got: usize },
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    /// Plain concatenation of every pretrained table.
    Concat,
    /// The second table replaced entirely by random vectors.
    RandomSecond,
    /// Second-table rows for words the first vocabulary already covers are
    /// randomized.
    ComplementSecond,
    /// Second-table rows for words the first vocabulary lacks are randomized.
    MatchedSecond,
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "concat" => Ok(PolicyKind::Concat),
            "random-second" | "random" => Ok(PolicyKind::RandomSecond),
            "complement-second" | "complement" => Ok(PolicyKind::ComplementSecond),
            "matched-second" | "matched" => Ok(PolicyKind::MatchedSecond),
            _ => Err(format!(
                "unknown policy `{s}` (expected concat, random-second, complement-second or matched-second)"
            )),
        }
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyKind::Concat => "concat",
            PolicyKind::RandomSecond => "random-second",
            PolicyKind::ComplementSecond => "complement-second",
            PolicyKind::MatchedSecond => "matched-second",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CombinePolicy {
    pub kind: PolicyKind,
    /// Index of the transformed ("second") table; `None` for `Concat`.
    pub applies_to: Option<usize>,
}

impl CombinePolicy {
    pub fn concat() -> Self {
        CombinePolicy {
            kind: PolicyKind::Concat,
            applies_to: None,
        }
    }

    /// An ablation applied to table `index` (1 for the usual second table).
    pub fn ablation(kind: PolicyKind, index: usize) -> Self {
        CombinePolicy {
            kind,
            applies_to: (kind != PolicyKind::Concat).then_some(index),
        }
    }

    pub fn validate(&self, n_tables: usize) -> Result<(), CombineError> {
        if n_tables == 0 {
            return Err(CombineError::TooFewTables { needed: 1, got: 0 });
        }
        match (self.kind, self.applies_to) {
            (PolicyKind::Concat, None) => Ok(()),
            (PolicyKind::Concat, Some(_)) => Err(CombineError::InvalidPolicy("concat transforms no table".into())),
            (_, None) => Err(CombineError::InvalidPolicy(format!(
                "{} needs a target table",
                self.kind
            ))),
            (_, Some(_)) if n_tables < 2 => Err(CombineError::TooFewTables {
                needed: 2,
                got: n_tables,
            }),
            (_, Some(i)) if i >= n_tables => Err(CombineError::InvalidPolicy(format!(
                "target table {i} out of range for {n_tables} tables"
            ))),
            _ => Ok(()),
        }
    }
}

/// Types a model's embedding layer is built over.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ModelVocab {
    pub types: Vec<String>,
    pub counts: Vec<u64>,
    pub source_splits: Vec<Split>,
    pub normalization: Normalization,
}

impl ModelVocab {
    pub fn len(&self) -> usize {
        self.types.len()
    }

    pub fn is_empty(&self) -> bool {
        self.types.is_empty()
    }

    /// Build directly from counts (count descending, token ascending).
    pub fn from_counts(counts: &VocabCounts, min_count: u64, source_splits: Vec<Split>) -> Result<Self, CombineError> {
        let (types, counts_out): (Vec<String>, Vec<u64>) = counts
            .ranked()
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, c)| (t.to_owned(), c))
            .unzip();
        if types.is_empty() {
            return Err(CombineError::EmptyVocab);
        }
        Ok(ModelVocab {
            types,
            counts: counts_out,
            source_splits,
            normalization: counts.normalization(),
        })
    }
}

/// Union of the normalized types of the selected splits (all splits when
/// `splits` is empty) with at least `min_count` occurrences.
pub fn model_vocab(
    datasets: &[Dataset],
    splits: &[Split],
    min_count: u64,
    normalization: Normalization,
) -> Result<ModelVocab, CombineError> {
    let selected: Vec<&Dataset> = datasets
        .iter()
        .filter(|d| splits.is_empty() || splits.contains(&d.split()))
        .filter(|d| d.num_tokens() > 0)
        .collect();
    let counts: Vec<VocabCounts> = selected
        .iter()
        .map(|d| VocabCounts::from_dataset(d, normalization))
        .collect();
    let merged = VocabCounts::merged(&counts).ok_or(CombineError::EmptyVocab)?;
    let mut source_splits: Vec<Split> = selected.iter().map(|d| d.split()).collect();
    source_splits.sort();
    source_splits.dedup();
    ModelVocab::from_counts(&merged, min_count.max(1), source_splits)
}

/// Rows kept pretrained vs replaced by `transform_second`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TransformStats {
    pub kept: usize,
    pub randomized: usize,
}

/// Apply an ablation to the second table. Vocabulary and dim never change;
/// only which rows keep their pretrained values.
pub fn transform_second(
    second: &EmbeddingTable,
    first_vocab: &HashSet<String>,
    kind: PolicyKind,
    backfill: &RandomBackfill,
) -> Result<(EmbeddingTable, TransformStats), CombineError> {
    let keep = |word: &str| -> bool {
        match kind {
            PolicyKind::RandomSecond => false,
            PolicyKind::ComplementSecond => !first_vocab.contains(word),
            PolicyKind::MatchedSecond => first_vocab.contains(word),
            PolicyKind::Concat => true,
        }
    };
    if kind == PolicyKind::Concat {
        return Err(CombineError::InvalidPolicy(
            "concat is not a second-table transform".into(),
        ));
    }
    if first_vocab.is_empty() && kind != PolicyKind::RandomSecond {
        return Err(CombineError::InvalidPolicy(format!(
            "{kind} needs a non-empty first vocabulary"
        )));
    }
    let dim = second.dim();
    let mut vectors = second.vectors().to_vec();
    let kept: usize = vectors
        .par_chunks_mut(dim)
        .zip(second.words().par_iter())
        .map(|(row, word)| {
            if keep(word) {
                1
            } else {
                backfill.fill(second.name(), word, row);
                0
            }
        })
        .sum();
    let table = EmbeddingTable::new(second.name(), dim, second.words().to_vec(), vectors)?;
    Ok((
        table,
        TransformStats {
            kept,
            randomized: second.len() - kept,
        },
    ))
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SourceUsage {
    pub table: String,
    pub dim: usize,
    pub offset: usize,
    /// Model types whose slice came from the (possibly transformed) table.
    pub looked_up: usize,
    /// Model types whose slice is a backfill vector.
    pub backfilled: usize,
    pub matched_by: BTreeMap<Normalization, usize>,
    pub transform: Option<TransformStats>,
}

#[derive(Clone, Debug)]
pub struct CombinedTable {
    pub table: EmbeddingTable,
    pub sources: Vec<SourceUsage>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct CombineOptions {
    /// Output table name; defaults to the source names joined with `+`.
    pub name: Option<String>,
    /// Prepend `<PAD>` (zeros) and `<UNK>` (backfill) rows.
    pub special_tokens: bool,
}

pub const PAD_TOKEN: &str = "<PAD>";
pub const UNK_TOKEN: &str = "<UNK>";

/// Concatenate `tables` row by row over `vocab`. Each slice is the
/// table's vector for the type, or that table's backfill vector when the
/// type is unattested.
pub fn combine(
    tables: &[EmbeddingTable],
    vocab: &ModelVocab,
    policy: &CombinePolicy,
    lookup: &LookupPolicy,
    backfill: &RandomBackfill,
    options: &CombineOptions,
) -> Result<CombinedTable, CombineError> {
    policy.validate(tables.len())?;
    if vocab.is_empty() {
        return Err(CombineError::EmptyVocab);
    }
    let mut names = HashSet::new();
    for t in tables {
        if !names.insert(t.name()) {
            return Err(CombineError::NameCollision(t.name().to_owned()));
        }
    }

    let mut transforms = vec![None; tables.len()];
    let mut sources: Vec<std::borrow::Cow<'_, EmbeddingTable>> =
        tables.iter().map(std::borrow::Cow::Borrowed).collect();
    if let Some(target) = policy.applies_to {
        let first_vocab: HashSet<String> = tables
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != target)
            .flat_map(|(_, t)| t.words().iter().cloned())
            .collect();
        let (table, stats) = transform_second(&tables[target], &first_vocab, policy.kind, backfill)?;
        sources[target] = std::borrow::Cow::Owned(table);
        transforms[target] = Some(stats);
    }

    let mut offsets = Vec::with_capacity(sources.len());
    let mut dim = 0;
    for s in &sources {
        offsets.push(dim);
        dim += s.dim();
    }

    let mut words: Vec<String> = Vec::with_capacity(vocab.len() + 2);
    if options.special_tokens {
        for special in [PAD_TOKEN, UNK_TOKEN] {
            if vocab.types.iter().any(|t| t == special) {
                return Err(CombineError::NameCollision(special.to_owned()));
            }
            words.push(special.to_owned());
        }
    }
    let n_special = words.len();
    words.extend(vocab.types.iter().cloned());

    let mut vectors = vec![0f32; words.len() * dim];
    // rows per type: which lookup step hit, per source
    let hits: Vec<Vec<Option<Normalization>>> = vectors
        .par_chunks_mut(dim)
        .zip(words.par_iter())
        .enumerate()
        .map(|(i, (row, word))| {
            let special = i < n_special;
            sources
                .iter()
                .zip(&offsets)
                .map(|(src, &off)| {
                    let slice = &mut row[off..off + src.dim()];
                    if special {
                        if word == UNK_TOKEN {
                            backfill.fill(src.name(), word, slice);
                        }
                        return None;
                    }
                    match lookup.lookup(src, word) {
                        Some((v, kind)) => {
                            slice.copy_from_slice(v);
                            Some(kind)
                        }
                        None => {
                            backfill.fill(src.name(), word, slice);
                            None
                        }
                    }
                })
                .collect()
        })
        .collect();

    let usage = sources
        .iter()
        .enumerate()
        .map(|(s, src)| {
            let mut u = SourceUsage {
                table: src.name().to_owned(),
                dim: src.dim(),
                offset: offsets[s],
                transform: transforms[s].clone(),
                ..Default::default()
            };
            for per_type in &hits[n_special..] {
                match per_type[s] {
                    Some(kind) => {
                        u.looked_up += 1;
                        *u.matched_by.entry(kind).or_insert(0) += 1;
                    }
                    None => u.backfilled += 1,
                }
            }
            u
        })
        .collect();

    let name = options
        .name
        .clone()
        .unwrap_or_else(|| tables.iter().map(EmbeddingTable::name).collect::<Vec<_>>().join("+"));
    Ok(CombinedTable {
        table: EmbeddingTable::new(name, dim, words, vectors)?,
        sources: usage,
    })
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Thresholds {
    /// Overlap percentage a pair must stay below.
    pub max_overlap: f64,
    /// Attested percentage both tables must reach on train.
    pub min_attested: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            max_overlap: 30.0,
            min_attested: 70.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PairVerdict {
    pub first: String,
    pub second: String,
    pub overlap_train: f64,
    pub overlap_dev: f64,
    pub attested_train_first: f64,
    pub attested_train_second: f64,
    pub attested_dev_first: f64,
    pub attested_dev_second: f64,
    pub min_attested: f64,
    pub recommended: bool,
    pub reasons: Vec<String>,
}

/// Score every unordered pair of tables: low neighbor overlap and high
/// attestation in both vocabularies make a recommended pair.
pub fn recommend(
    tables: &[EmbeddingTable],
    train: &VocabCounts,
    dev: &VocabCounts,
    thresholds: &Thresholds,
    top_n: usize,
    options: &SimilarityOptions,
) -> Result<Vec<PairVerdict>, CombineError> {
    if tables.len() < 2 {
        return Err(CombineError::TooFewTables {
            needed: 2,
            got: tables.len(),
        });
    }
    let indexes: Vec<NeighborIndex<'_>> = tables.iter().map(NeighborIndex::new).collect();
    let cover = |t: &EmbeddingTable, counts: &VocabCounts, split| {
        analysis::coverage(counts, t, &options.policy, split).map(|c| c.attested_pct)
    };
    let mut verdicts = Vec::new();
    for i in 0..tables.len() {
        for j in i + 1..tables.len() {
            let report = if options.shared_vocab {
                analysis::pair_report(&tables[i], &tables[j], train, dev, top_n, options)?
            } else {
                analysis::pair_report_with_indexes(&indexes[i], &indexes[j], train, dev, top_n, options)?
            };
            let attested_train_first = cover(&tables[i], train, Split::Train)?;
            let attested_dev_first = cover(&tables[i], dev, Split::Dev)?;
            let min_attested = attested_train_first.min(report.attested_train);
            let mut reasons = Vec::new();
            if report.overlap_train >= thresholds.max_overlap {
                reasons.push(format!(
                    "overlap {:.1} >= {:.1}",
                    report.overlap_train, thresholds.max_overlap
                ));
            }
            if min_attested < thresholds.min_attested {
                reasons.push(format!("attested {:.1} < {:.1}", min_attested, thresholds.min_attested));
            }
            verdicts.push(PairVerdict {
                first: tables[i].name().to_owned(),
                second: tables[j].name().to_owned(),
                overlap_train: report.overlap_train,
                overlap_dev: report.overlap_dev,
                attested_train_first,
                attested_train_second: report.attested_train,
                attested_dev_first,
                attested_dev_second: report.attested_dev,
                min_attested,
                recommended: reasons.is_empty(),
                reasons,
            });
        }
    }
    verdicts.sort_by(rank);
    Ok(verdicts)
}

fn rank(a: &PairVerdict, b: &PairVerdict) -> Ordering {
    b.recommended
        .cmp(&a.recommended)
        .then_with(|| a.overlap_train.total_cmp(&b.overlap_train))
        .then_with(|| b.min_attested.total_cmp(&a.min_attested))
        .then_with(|| (&a.first, &a.second).cmp(&(&b.first, &b.second)))
}
