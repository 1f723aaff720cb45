//! Pre-tokenized datasets (CoNLL columns, labeled text) and type-frequency
//! statistics.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding::Normalization;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] io::Error),
    #[error("line {line}: expected at least {needed} columns, found {found}")]
    MissingColumn { line: usize, needed: usize, found: usize },
    #[error("line {line}: missing label field {field}")]
    MissingLabel { line: usize, field: usize },
    #[error("line {line}: example has no tokens")]
    MissingText { line: usize },
    #[error("dataset is empty")]
    Empty,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Dev,
    Test,
    Other,
}

impl FromStr for Split {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Split::Train),
            "dev" | "valid" | "validation" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            "other" => Ok(Split::Other),
            _ => Err(format!("unknown split `{s}`")),
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
            Split::Other => "other",
        })
    }
}

/// Column selector for whitespace-delimited CoNLL lines.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Column {
    At(usize),
    /// The last column of each line.
    Last,
}

impl Column {
    fn resolve(self, width: usize) -> Option<usize> {
        match self {
            Column::At(i) if i < width => Some(i),
            Column::Last if width > 0 => Some(width - 1),
            _ => None,
        }
    }

    fn needed(self) -> usize {
        match self {
            Column::At(i) => i + 1,
            Column::Last => 1,
        }
    }
}

impl FromStr for Column {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "last" || s == "-1" {
            return Ok(Column::Last);
        }
        s.parse()
            .map(Column::At)
            .map_err(|_| format!("invalid column `{s}` (expected an index or `last`)"))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub tokens: Vec<String>,
    pub labels: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TokenDataset {
    pub sentences: Vec<Sentence>,
    pub split: Split,
}

impl TokenDataset {
    pub fn num_tokens(&self) -> usize {
        self.sentences.iter().map(|s| s.tokens.len()).sum()
    }

    pub fn labels(&self) -> Vec<Vec<String>> {
        self.sentences.iter().map(|s| s.labels.clone()).collect()
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct ConllOptions {
    pub token_column: Column,
    pub label_column: Column,
    /// Keep `-DOCSTART-` lines as one-token sentences instead of skipping
    /// them. Published CoNLL 2003 example counts include them.
    pub keep_docstart: bool,
}

impl Default for ConllOptions {
    fn default() -> Self {
        ConllOptions {
            token_column: Column::At(0),
            label_column: Column::Last,
            keep_docstart: false,
        }
    }
}

pub fn read_conll(path: &Path, split: Split, options: &ConllOptions) -> Result<TokenDataset, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_conll_from(BufReader::new(file), split, options)
}

/// Parse blank-line-separated blocks of whitespace-delimited columns.
pub fn read_conll_from<R: BufRead>(
    reader: R,
    split: Split,
    options: &ConllOptions,
) -> Result<TokenDataset, CorpusError> {
    let mut sentences = Vec::new();
    let mut current = Sentence {
        tokens: Vec::new(),
        labels: Vec::new(),
    };
    let flush = |current: &mut Sentence, sentences: &mut Vec<Sentence>| {
        if !current.tokens.is_empty() {
            sentences.push(std::mem::replace(
                current,
                Sentence {
                    tokens: Vec::new(),
                    labels: Vec::new(),
                },
            ));
        }
    };
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            flush(&mut current, &mut sentences);
            continue;
        }
        if fields[0].starts_with("-DOCSTART-") && !options.keep_docstart {
            flush(&mut current, &mut sentences);
            continue;
        }
        let needed = options.token_column.needed().max(options.label_column.needed());
        let (Some(tok), Some(lab)) = (
            options.token_column.resolve(fields.len()),
            options.label_column.resolve(fields.len()),
        ) else {
            return Err(CorpusError::MissingColumn {
                line: i + 1,
                needed,
                found: fields.len(),
            });
        };
        current.tokens.push(fields[tok].to_owned());
        current.labels.push(fields[lab].to_owned());
    }
    flush(&mut current, &mut sentences);
    if sentences.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(TokenDataset { sentences, split })
}

/// Write `token label` lines with a blank line after every sentence.
pub fn write_conll<W: Write>(dataset: &TokenDataset, writer: &mut W) -> io::Result<()> {
    for sentence in &dataset.sentences {
        for (token, label) in sentence.tokens.iter().zip(&sentence.labels) {
            writeln!(writer, "{token} {label}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct TextExample {
    pub label: String,
    pub tokens: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TextDataset {
    pub examples: Vec<TextExample>,
    pub split: Split,
    /// Blank lines skipped while reading.
    pub skipped: usize,
}

impl TextDataset {
    pub fn num_tokens(&self) -> usize {
        self.examples.iter().map(|e| e.tokens.len()).sum()
    }
}

pub fn read_labeled_text(
    path: &Path,
    split: Split,
    delimiter: &str,
    label_field: usize,
) -> Result<TextDataset, CorpusError> {
    let file = File::open(path).map_err(|source| CorpusError::Io {
        path: path.to_owned(),
        source,
    })?;
    read_labeled_text_from(BufReader::new(file), split, delimiter, label_field)
}

/// One example per line: `label_field` of the `delimiter`-split line is the
/// label, the remaining fields are whitespace-tokenized text.
pub fn read_labeled_text_from<R: BufRead>(
    reader: R,
    split: Split,
    delimiter: &str,
    label_field: usize,
) -> Result<TextDataset, CorpusError> {
    let mut examples = Vec::new();
    let mut skipped = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            skipped += 1;
            continue;
        }
        let fields: Vec<&str> = line.split(delimiter).collect();
        let label = fields
            .get(label_field)
            .map(|l| l.trim())
            .filter(|l| !l.is_empty())
            .ok_or(CorpusError::MissingLabel {
                line: i + 1,
                field: label_field,
            })?;
        let tokens: Vec<String> = fields
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != label_field)
            .flat_map(|(_, f)| f.split_whitespace())
            .map(str::to_owned)
            .collect();
        if tokens.is_empty() {
            return Err(CorpusError::MissingText { line: i + 1 });
        }
        examples.push(TextExample {
            label: label.to_owned(),
            tokens,
        });
    }
    if examples.is_empty() {
        return Err(CorpusError::Empty);
    }
    Ok(TextDataset {
        examples,
        split,
        skipped,
    })
}

/// Either dataset shape; both reduce to a token stream for counting.
#[derive(Clone, Debug)]
pub enum Dataset {
    Tagged(TokenDataset),
    Text(TextDataset),
}

impl Dataset {
    pub fn split(&self) -> Split {
        match self {
            Dataset::Tagged(d) => d.split,
            Dataset::Text(d) => d.split,
        }
    }

    pub fn num_examples(&self) -> usize {
        match self {
            Dataset::Tagged(d) => d.sentences.len(),
            Dataset::Text(d) => d.examples.len(),
        }
    }

    pub fn num_tokens(&self) -> usize {
        match self {
            Dataset::Tagged(d) => d.num_tokens(),
            Dataset::Text(d) => d.num_tokens(),
        }
    }

    pub fn tokens(&self) -> Box<dyn Iterator<Item = &str> + '_> {
        match self {
            Dataset::Tagged(d) => Box::new(d.sentences.iter().flat_map(|s| s.tokens.iter().map(String::as_str))),
            Dataset::Text(d) => Box::new(d.examples.iter().flat_map(|e| e.tokens.iter().map(String::as_str))),
        }
    }
}

impl From<TokenDataset> for Dataset {
    fn from(d: TokenDataset) -> Self {
        Dataset::Tagged(d)
    }
}

impl From<TextDataset> for Dataset {
    fn from(d: TextDataset) -> Self {
        Dataset::Text(d)
    }
}

/// Occurrence counts of normalized surface types.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VocabCounts {
    counts: HashMap<String, u64>,
    total_tokens: u64,
    normalization: Normalization,
}

impl VocabCounts {
    pub fn from_tokens<'a>(tokens: impl IntoIterator<Item = &'a str>, normalization: Normalization) -> Self {
        let mut counts: HashMap<String, u64> = HashMap::new();
        let mut total_tokens = 0;
        for token in tokens {
            total_tokens += 1;
            let key = normalization.apply(token);
            match counts.get_mut(key.as_ref()) {
                Some(c) => *c += 1,
                None => {
                    counts.insert(key.into_owned(), 1);
                }
            }
        }
        VocabCounts {
            counts,
            total_tokens,
            normalization,
        }
    }

    pub fn from_dataset(dataset: &Dataset, normalization: Normalization) -> Self {
        Self::from_tokens(dataset.tokens(), normalization)
    }

    /// Merge several splits into one count table.
    pub fn merged<'a>(parts: impl IntoIterator<Item = &'a VocabCounts>) -> Option<Self> {
        let mut parts = parts.into_iter();
        let mut out = parts.next()?.clone();
        for part in parts {
            debug_assert_eq!(part.normalization, out.normalization);
            for (t, c) in &part.counts {
                *out.counts.entry(t.clone()).or_insert(0) += c;
            }
            out.total_tokens += part.total_tokens;
        }
        Some(out)
    }

    pub fn get(&self, ty: &str) -> u64 {
        self.counts.get(ty).copied().unwrap_or(0)
    }

    pub fn num_types(&self) -> usize {
        self.counts.len()
    }

    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn normalization(&self) -> Normalization {
        self.normalization
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, u64)> + '_ {
        self.counts.iter().map(|(t, &c)| (t.as_str(), c))
    }

    /// All types, count descending then bytewise ascending.
    pub fn ranked(&self) -> Vec<(&str, u64)> {
        let mut all: Vec<(&str, u64)> = self.iter().collect();
        all.sort_unstable_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        all
    }

    /// The `n` most frequent types; ties broken bytewise ascending.
    pub fn top_n_types(&self, n: usize) -> Vec<String> {
        let mut ranked = self.ranked();
        ranked.truncate(n);
        ranked.into_iter().map(|(t, _)| t.to_owned()).collect()
    }
}
