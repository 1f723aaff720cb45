//! GloVe text and word2vec binary readers and writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use super::{EmbeddingError, EmbeddingTable};

/// On-disk embedding formats.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EmbeddingFormat {
    /// `token v1 v2 ...` per line.
    GloveText,
    /// GloVe text preceded by a `"<vocab> <dim>"` line.
    GloveTextWithHeader,
    /// `"<vocab> <dim>\n"` then `token 0x20 <dim x f32 LE> [0x0A]` records.
    Word2VecBinary,
}

impl FromStr for EmbeddingFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "glove" | "glove-text" | "GloveText" => Ok(EmbeddingFormat::GloveText),
            "glove-header" | "GloveTextWithHeader" => Ok(EmbeddingFormat::GloveTextWithHeader),
            "w2v" | "word2vec" | "word2vec-binary" | "Word2VecBinary" => Ok(EmbeddingFormat::Word2VecBinary),
            other => Err(format!(
                "unknown embedding format `{other}` (expected glove, glove-header or w2v)"
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DuplicatePolicy {
    /// Keep the first occurrence of a token and count the rest.
    #[default]
    KeepFirst,
    Error,
}

#[derive(Clone, Debug, Default)]
pub struct ReadOptions {
    /// Table name; defaults to the file stem.
    pub name: Option<String>,
    pub duplicates: DuplicatePolicy,
    /// Treat header/record-count disagreements as errors instead of warnings.
    pub strict: bool,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ReadStats {
    pub records: usize,
    pub duplicates: usize,
    /// `(declared, found)` when a header disagreed with the record count.
    pub header_mismatch: Option<(usize, usize)>,
}

#[derive(Debug)]
pub struct LoadedTable {
    pub table: EmbeddingTable,
    pub format: EmbeddingFormat,
    pub stats: ReadStats,
}

const SNIFF_BYTES: usize = 1 << 16;

/// Classify an embedding file by inspecting its first bytes.
pub fn detect_format(path: &Path) -> Result<EmbeddingFormat, EmbeddingError> {
    let file = File::open(path).map_err(|source| io_err(path, source))?;
    let mut head = Vec::with_capacity(SNIFF_BYTES);
    file.take(SNIFF_BYTES as u64)
        .read_to_end(&mut head)
        .map_err(|source| io_err(path, source))?;
    detect_format_from_bytes(&head)
}

pub fn detect_format_from_bytes(head: &[u8]) -> Result<EmbeddingFormat, EmbeddingError> {
    let unrecognized = || {
        let shown = &head[..head.len().min(32)];
        EmbeddingError::UnrecognizedFormat(String::from_utf8_lossy(shown).into_owned())
    };
    let first_end = head.iter().position(|&b| b == b'\n').unwrap_or(head.len());
    let first = std::str::from_utf8(&head[..first_end]).map_err(|_| unrecognized())?;
    let fields: Vec<&str> = first.split_ascii_whitespace().collect();

    if let Some((_, dim)) = parse_header_fields(&fields) {
        let rest = head.get(first_end + 1..).unwrap_or(&[]);
        let second_end = rest.iter().position(|&b| b == b'\n');
        let second = second_end.map(|end| &rest[..end]).unwrap_or(rest);
        match std::str::from_utf8(second) {
            Ok(line) if parse_text_record(line, Some(dim)).is_some() => {
                return Ok(EmbeddingFormat::GloveTextWithHeader)
            }
            // a one-dimensional GloVe file whose first token is numeric
            Ok(line) if !line.is_empty() && parse_text_record(line, Some(1)).is_some() => {
                return Ok(EmbeddingFormat::GloveText)
            }
            _ if !rest.is_empty() => return Ok(EmbeddingFormat::Word2VecBinary),
            _ => return Err(unrecognized()),
        }
    }
    if fields.len() >= 2 && parse_text_record(first, None).is_some() {
        return Ok(EmbeddingFormat::GloveText);
    }
    Err(unrecognized())
}

fn parse_header_fields(fields: &[&str]) -> Option<(usize, usize)> {
    match fields {
        [vocab, dim] if is_decimal(vocab) && is_decimal(dim) => Some((vocab.parse().ok()?, dim.parse().ok()?)),
        _ => None,
    }
}

fn is_decimal(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

/// Split a text record into token and values. With a known width the token
/// is everything before the last `dim` fields, so tokens containing spaces
/// (present in some public GloVe releases) survive.
fn parse_text_record(line: &str, dim: Option<usize>) -> Option<(&str, Vec<f32>)> {
    let line = line.trim_end();
    let (token, values) = match dim {
        Some(dim) => {
            let mut parts: Vec<&str> = line.rsplitn(dim + 1, ' ').collect();
            if parts.len() != dim + 1 {
                return None;
            }
            let token = parts.pop()?;
            parts.reverse();
            (token, parts)
        }
        None => {
            let mut parts = line.split(' ');
            let token = parts.next()?;
            (token, parts.collect())
        }
    };
    if token.is_empty() {
        return None;
    }
    let values = values
        .into_iter()
        .map(|v| v.parse::<f32>().ok().filter(|x| x.is_finite()))
        .collect::<Option<Vec<f32>>>()?;
    Some((token, values))
}

/// Read an embedding file into a validated table.
pub fn read_embeddings(
    path: &Path,
    format: EmbeddingFormat,
    options: &ReadOptions,
) -> Result<LoadedTable, EmbeddingError> {
    let file = File::open(path).map_err(|source| io_err(path, source))?;
    let mut options = options.clone();
    if options.name.is_none() {
        options.name = Some(table_name_from_path(path));
    }
    read_embeddings_from(BufReader::with_capacity(1 << 20, file), format, &options)
}

pub(crate) fn table_name_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "embeddings".to_owned())
}

/// Read from any buffered source.
pub fn read_embeddings_from<R: BufRead>(
    reader: R,
    format: EmbeddingFormat,
    options: &ReadOptions,
) -> Result<LoadedTable, EmbeddingError> {
    let mut builder = Builder::new(options.duplicates);
    let header_mismatch = match format {
        EmbeddingFormat::GloveText => {
            read_text(reader, false, &mut builder)?;
            None
        }
        EmbeddingFormat::GloveTextWithHeader => read_text(reader, true, &mut builder)?,
        EmbeddingFormat::Word2VecBinary => read_binary(reader, &mut builder)?,
    };
    if let Some((declared, found)) = header_mismatch {
        if options.strict {
            return Err(EmbeddingError::CountMismatch { declared, found });
        }
        warn!("header declares {declared} vectors, file holds {found}");
    }
    if builder.duplicates > 0 {
        warn!("skipped {} duplicate tokens (kept first)", builder.duplicates);
    }
    let stats = ReadStats {
        records: builder.records,
        duplicates: builder.duplicates,
        header_mismatch,
    };
    let name = options.name.clone().unwrap_or_else(|| "embeddings".to_owned());
    let table = EmbeddingTable::new(name, builder.dim.unwrap_or(0), builder.words, builder.vectors)?;
    Ok(LoadedTable { table, format, stats })
}

struct Builder {
    dim: Option<usize>,
    words: Vec<String>,
    vectors: Vec<f32>,
    seen: std::collections::HashSet<String>,
    policy: DuplicatePolicy,
    records: usize,
    duplicates: usize,
}

impl Builder {
    fn new(policy: DuplicatePolicy) -> Self {
        Builder {
            dim: None,
            words: Vec::new(),
            vectors: Vec::new(),
            seen: Default::default(),
            policy,
            records: 0,
            duplicates: 0,
        }
    }

    fn push(&mut self, token: String, values: &[f32]) -> Result<(), EmbeddingError> {
        self.records += 1;
        if self.seen.contains(&token) {
            return match self.policy {
                DuplicatePolicy::KeepFirst => {
                    self.duplicates += 1;
                    Ok(())
                }
                DuplicatePolicy::Error => Err(EmbeddingError::DuplicateToken {
                    token,
                    record: self.records,
                }),
            };
        }
        self.seen.insert(token.clone());
        self.words.push(token);
        self.vectors.extend_from_slice(values);
        Ok(())
    }
}

fn read_text<R: BufRead>(
    mut reader: R,
    has_header: bool,
    builder: &mut Builder,
) -> Result<Option<(usize, usize)>, EmbeddingError> {
    let mut line = String::new();
    let mut line_no = 0;
    let mut declared = None;
    if has_header {
        line_no += 1;
        reader.read_line(&mut line)?;
        let fields: Vec<&str> = line.split_ascii_whitespace().collect();
        let (vocab, dim) = parse_header_fields(&fields).ok_or_else(|| EmbeddingError::BadHeader(line.clone()))?;
        if dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        builder.dim = Some(dim);
        declared = Some(vocab);
    }
    loop {
        line.clear();
        if reader.read_line(&mut line)? == 0 {
            break;
        }
        line_no += 1;
        let record = line.trim_end_matches(['\n', '\r']);
        if record.trim().is_empty() {
            continue;
        }
        let dim = match builder.dim {
            Some(dim) => dim,
            None => {
                let width = record.trim_end().split(' ').count() - 1;
                if width == 0 {
                    return Err(EmbeddingError::InconsistentWidth {
                        line: line_no,
                        expected: 1,
                        found: 0,
                    });
                }
                builder.dim = Some(width);
                width
            }
        };
        let (token, values) = split_text_record(record, dim, line_no)?;
        builder.push(token.to_owned(), &values)?;
    }
    Ok(declared.and_then(|d| (d != builder.records).then_some((d, builder.records))))
}

fn split_text_record(record: &str, dim: usize, line: usize) -> Result<(&str, Vec<f32>), EmbeddingError> {
    let record = record.trim_end();
    let mut parts: Vec<&str> = record.rsplitn(dim + 1, ' ').collect();
    let token = if parts.len() == dim + 1 { parts.pop() } else { None };
    let width_error = |found| EmbeddingError::InconsistentWidth {
        line,
        expected: dim,
        found,
    };
    let token = match token {
        Some(t) if !t.is_empty() => t,
        _ => return Err(width_error(parts.len().saturating_sub(1))),
    };
    // a numeric tail on the token means the row is wider than `dim`
    if let Some((_, tail)) = token.rsplit_once(' ') {
        if tail.parse::<f32>().is_ok() {
            return Err(width_error(record.split(' ').count() - 1));
        }
    }
    parts.reverse();
    let values = parts
        .iter()
        .map(|v| match v.parse::<f32>() {
            Ok(x) if x.is_finite() => Ok(x),
            _ => Err(EmbeddingError::BadValue {
                record: line,
                value: (*v).to_owned(),
            }),
        })
        .collect::<Result<Vec<f32>, _>>()?;
    Ok((token, values))
}

fn read_binary<R: BufRead>(mut reader: R, builder: &mut Builder) -> Result<Option<(usize, usize)>, EmbeddingError> {
    let mut header = Vec::new();
    reader.read_until(b'\n', &mut header)?;
    let header_text = String::from_utf8_lossy(&header).into_owned();
    let fields: Vec<&str> = header_text.split_ascii_whitespace().collect();
    let (vocab, dim) = parse_header_fields(&fields).ok_or_else(|| EmbeddingError::BadHeader(header_text.clone()))?;
    if dim == 0 {
        return Err(EmbeddingError::ZeroDim);
    }
    builder.dim = Some(dim);

    let mut token = Vec::new();
    let mut raw = vec![0u8; dim * 4];
    let mut values = vec![0f32; dim];
    for record in 1..=vocab {
        if !skip_whitespace(&mut reader)? {
            return Ok(Some((vocab, record - 1)));
        }
        token.clear();
        reader.read_until(b' ', &mut token)?;
        if token.pop() != Some(b' ') {
            return Err(EmbeddingError::Truncated { record });
        }
        reader.read_exact(&mut raw).map_err(|e| match e.kind() {
            std::io::ErrorKind::UnexpectedEof => EmbeddingError::Truncated { record },
            _ => EmbeddingError::Stream(e),
        })?;
        for (v, bytes) in values.iter_mut().zip(raw.chunks_exact(4)) {
            *v = f32::from_le_bytes(bytes.try_into().unwrap());
            if !v.is_finite() {
                return Err(EmbeddingError::BadValue {
                    record,
                    value: v.to_string(),
                });
            }
        }
        builder.push(String::from_utf8_lossy(&token).into_owned(), &values)?;
    }
    if skip_whitespace(&mut reader)? {
        // trailing records beyond the declared count are ignored
        let mut extra = 0;
        let mut rest = Vec::new();
        while reader.read_until(b' ', &mut rest)? > 0 {
            extra += 1;
            if reader.read_exact(&mut raw).is_err() {
                break;
            }
            rest.clear();
            if !skip_whitespace(&mut reader)? {
                break;
            }
        }
        return Ok(Some((vocab, vocab + extra)));
    }
    Ok(None)
}

/// Consume ASCII whitespace; returns whether any byte remains.
fn skip_whitespace<R: BufRead>(reader: &mut R) -> Result<bool, EmbeddingError> {
    loop {
        let buf = reader.fill_buf()?;
        if buf.is_empty() {
            return Ok(false);
        }
        let n = buf.iter().take_while(|b| b.is_ascii_whitespace()).count();
        let more = n < buf.len();
        reader.consume(n);
        if more {
            return Ok(true);
        }
    }
}

/// Write `table` to `path` in `format`.
pub fn write_embeddings(table: &EmbeddingTable, path: &Path, format: EmbeddingFormat) -> Result<(), EmbeddingError> {
    check_tokens(table)?;
    let file = File::create(path).map_err(|source| io_err(path, source))?;
    let mut writer = BufWriter::with_capacity(1 << 20, file);
    write_embeddings_to(table, &mut writer, format)?;
    writer.flush().map_err(|source| io_err(path, source))
}

pub fn write_embeddings_to<W: Write>(
    table: &EmbeddingTable,
    writer: &mut W,
    format: EmbeddingFormat,
) -> Result<(), EmbeddingError> {
    check_tokens(table)?;
    if format != EmbeddingFormat::GloveText {
        writeln!(writer, "{} {}", table.len(), table.dim())?;
    }
    for (word, vector) in table.iter() {
        match format {
            EmbeddingFormat::GloveText | EmbeddingFormat::GloveTextWithHeader => {
                writer.write_all(word.as_bytes())?;
                for v in vector {
                    // shortest representation that parses back to the same f32
                    write!(writer, " {v}")?;
                }
                writer.write_all(b"\n")?;
            }
            EmbeddingFormat::Word2VecBinary => {
                writer.write_all(word.as_bytes())?;
                writer.write_all(b" ")?;
                for v in vector {
                    writer.write_all(&v.to_le_bytes())?;
                }
                writer.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

fn check_tokens(table: &EmbeddingTable) -> Result<(), EmbeddingError> {
    match table
        .words()
        .iter()
        .find(|w| w.is_empty() || w.bytes().any(|b| b.is_ascii_whitespace()))
    {
        Some(bad) => Err(EmbeddingError::IllegalToken(bad.clone())),
        None => Ok(()),
    }
}

fn io_err(path: &Path, source: std::io::Error) -> EmbeddingError {
    EmbeddingError::Io {
        path: path.to_owned(),
        source,
    }
}
