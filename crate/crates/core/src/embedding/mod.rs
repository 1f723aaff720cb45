//! Pre-trained embedding tables: storage, file formats, token lookup and
//! deterministic random backfill.

mod backfill;
mod format;
mod lookup;

use std::collections::HashMap;
use std::fmt;
use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub use backfill::RandomBackfill;
pub use format::{
    detect_format, detect_format_from_bytes, read_embeddings, read_embeddings_from, write_embeddings,
    write_embeddings_to, DuplicatePolicy, EmbeddingFormat, LoadedTable, ReadOptions, ReadStats,
};
pub use lookup::{LookupPolicy, MatchKind, Normalization};

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("I/O error: {0}")]
    Stream(#[from] io::Error),
    #[error("unrecognized format: first bytes {0:?}")]
    UnrecognizedFormat(String),
    #[error("line {line}: expected {expected} values, found {found}")]
    InconsistentWidth { line: usize, expected: usize, found: usize },
    #[error("record {record}: non-finite or unparsable value {value:?}")]
    BadValue { record: usize, value: String },
    #[error("record {record}: truncated binary record")]
    Truncated { record: usize },
    #[error("malformed header: {0:?}")]
    BadHeader(String),
    #[error("header declares {declared} vectors, file holds {found}")]
    CountMismatch { declared: usize, found: usize },
    #[error("duplicate token {token:?} at record {record}")]
    DuplicateToken { token: String, record: usize },
    #[error("token {0:?} cannot be written: contains whitespace or is empty")]
    IllegalToken(String),
    #[error("table has no rows")]
    Empty,
    #[error("dimension must be at least 1")]
    ZeroDim,
    #[error("matrix holds {found} values, expected {rows} rows of width {dim}")]
    ShapeMismatch { rows: usize, dim: usize, found: usize },
    #[error("row {row} of token {token:?} holds a non-finite value")]
    NonFinite { row: usize, token: String },
}

/// A named vocabulary with one dense single-precision vector per token.
///
/// Rows are stored contiguously; the row id of a token is its position in
/// `words`. Tables are immutable once built.
#[derive(Clone, PartialEq)]
pub struct EmbeddingTable {
    name: String,
    dim: usize,
    words: Vec<String>,
    vectors: Vec<f32>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    /// Build a table, checking every invariant.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        words: Vec<String>,
        vectors: Vec<f32>,
    ) -> Result<Self, EmbeddingError> {
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        if words.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if vectors.len() != words.len() * dim {
            return Err(EmbeddingError::ShapeMismatch {
                rows: words.len(),
                dim,
                found: vectors.len(),
            });
        }
        let mut index = HashMap::with_capacity(words.len());
        for (row, word) in words.iter().enumerate() {
            if index.insert(word.clone(), row).is_some() {
                return Err(EmbeddingError::DuplicateToken {
                    token: word.clone(),
                    record: row,
                });
            }
        }
        for (row, chunk) in vectors.chunks_exact(dim).enumerate() {
            if chunk.iter().any(|v| !v.is_finite()) {
                return Err(EmbeddingError::NonFinite {
                    row,
                    token: words[row].clone(),
                });
            }
        }
        Ok(EmbeddingTable {
            name: name.into(),
            dim,
            words,
            vectors,
            index,
        })
    }

    /// Build a table from `(token, vector)` rows.
    pub fn from_rows<I, S>(name: impl Into<String>, rows: I) -> Result<Self, EmbeddingError>
    where
        I: IntoIterator<Item = (S, Vec<f32>)>,
        S: Into<String>,
    {
        let mut words = Vec::new();
        let mut vectors = Vec::new();
        let mut dim = None;
        for (i, (word, vector)) in rows.into_iter().enumerate() {
            let expected = *dim.get_or_insert(vector.len());
            if vector.len() != expected {
                return Err(EmbeddingError::InconsistentWidth {
                    line: i + 1,
                    expected,
                    found: vector.len(),
                });
            }
            words.push(word.into());
            vectors.extend(vector);
        }
        Self::new(name, dim.unwrap_or(0), words, vectors)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Same rows under a different name.
    pub fn renamed(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn word(&self, row: usize) -> &str {
        &self.words[row]
    }

    pub fn row(&self, row: usize) -> &[f32] {
        &self.vectors[row * self.dim..(row + 1) * self.dim]
    }

    /// Row id of an exact token.
    pub fn row_id(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    /// Exact-match vector lookup.
    pub fn get(&self, token: &str) -> Option<&[f32]> {
        self.row_id(token).map(|r| self.row(r))
    }

    pub fn vectors(&self) -> &[f32] {
        &self.vectors
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f32])> + '_ {
        self.words
            .iter()
            .map(String::as_str)
            .zip(self.vectors.chunks_exact(self.dim))
    }

    /// Apply `f` to every value, keeping vocabulary and shape.
    pub fn map_values(&self, f: impl Fn(f32) -> f32) -> Result<Self, EmbeddingError> {
        Self::new(
            self.name.clone(),
            self.dim,
            self.words.clone(),
            self.vectors.iter().map(|&v| f(v)).collect(),
        )
    }
}

impl fmt::Debug for EmbeddingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("EmbeddingTable")
            .field("name", &self.name)
            .field("rows", &self.words.len())
            .field("dim", &self.dim)
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let dup = EmbeddingTable::from_rows("t", vec![("a", vec![1.0]), ("a", vec![2.0])]);
        assert!(matches!(dup, Err(EmbeddingError::DuplicateToken { .. })));
        let nan = EmbeddingTable::from_rows("t", vec![("a", vec![f32::NAN])]);
        assert!(matches!(nan, Err(EmbeddingError::NonFinite { .. })));
        let empty = EmbeddingTable::from_rows::<_, String>("t", vec![]);
        assert!(matches!(empty, Err(EmbeddingError::ZeroDim | EmbeddingError::Empty)));
    }

    #[test]
    fn index_is_inverse_of_words() {
        let t = EmbeddingTable::from_rows("t", vec![("x", vec![1.0, 2.0]), ("y", vec![3.0, 4.0])]).unwrap();
        for (i, w) in t.words().iter().enumerate() {
            assert_eq!(t.row_id(w), Some(i));
        }
        assert_eq!(t.get("y"), Some(&[3.0, 4.0][..]));
        assert_eq!(t.get("z"), None);
    }
}
