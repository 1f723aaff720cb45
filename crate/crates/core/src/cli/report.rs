use std::fs::File;
use std::io::{self, Read};
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl InputFile {
    pub fn hash(path: &Path) -> io::Result<Self> {
        let (bytes, sha256) = sha256_file(path)?;
        Ok(InputFile {
            path: path.display().to_string(),
            bytes,
            sha256,
        })
    }
}

pub fn sha256_file(path: &Path) -> io::Result<(u64, String)> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut total = 0u64;
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            break;
        }
        total += n as u64;
        hasher.update(&buf[..n]);
    }
    Ok((total, hex::encode(hasher.finalize())))
}

/// Provenance embedded in every report.
#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub options: Value,
    pub inputs: Vec<InputFile>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

#[derive(Serialize)]
pub struct Envelope<'a> {
    pub manifest: &'a RunManifest,
    pub result: &'a Value,
}

/// Aligned `key  value` lines for a JSON value, with nested keys dotted.
/// Arrays of flat objects become aligned tables.
pub fn render_text(value: &Value) -> String {
    let mut rows = Vec::new();
    let mut tables = Vec::new();
    flatten("", value, &mut rows, &mut tables);
    let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::new();
    for (k, v) in rows {
        out.push_str(&format!("{k:<width$}  {v}\n"));
    }
    for (name, table) in tables {
        out.push('\n');
        out.push_str(&name);
        out.push('\n');
        out.push_str(&table);
    }
    out
}

fn scalar(v: &Value) -> Option<String> {
    match v {
        Value::Null => Some("-".into()),
        Value::Bool(b) => Some(b.to_string()),
        Value::Number(n) => Some(match n.as_f64() {
            Some(f) if n.is_f64() => format_float(f),
            _ => n.to_string(),
        }),
        Value::String(s) => Some(s.clone()),
        _ => None,
    }
}

fn format_float(f: f64) -> String {
    if f.fract() == 0.0 && f.abs() < 1e15 {
        format!("{f:.1}")
    } else {
        format!("{f:.4}")
    }
}

fn flatten(prefix: &str, value: &Value, rows: &mut Vec<(String, String)>, tables: &mut Vec<(String, String)>) {
    let join = |k: &str| {
        if prefix.is_empty() {
            k.to_owned()
        } else {
            format!("{prefix}.{k}")
        }
    };
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                flatten(&join(k), v, rows, tables);
            }
        }
        Value::Array(items) if !items.is_empty() && items.iter().all(is_flat_object) => {
            tables.push((prefix.to_owned(), table(items)));
        }
        Value::Array(items) if items.iter().all(|i| scalar(i).is_some()) => {
            let joined: Vec<String> = items.iter().filter_map(scalar).collect();
            rows.push((prefix.to_owned(), joined.join(", ")));
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                flatten(&join(&i.to_string()), v, rows, tables);
            }
        }
        v => rows.push((prefix.to_owned(), scalar(v).unwrap_or_default())),
    }
}

fn is_flat_object(v: &Value) -> bool {
    match v {
        Value::Object(m) => m
            .values()
            .all(|x| scalar(x).is_some() || matches!(x, Value::Array(a) if a.iter().all(|i| scalar(i).is_some()))),
        _ => false,
    }
}

fn cell(v: &Value) -> String {
    match v {
        Value::Array(a) => a.iter().filter_map(scalar).collect::<Vec<_>>().join("; "),
        v => scalar(v).unwrap_or_default(),
    }
}

/// Aligned plain-text table; numeric columns right-aligned.
pub fn table(items: &[Value]) -> String {
    let mut headers: Vec<String> = Vec::new();
    for item in items {
        if let Value::Object(m) = item {
            for k in m.keys() {
                if !headers.contains(k) {
                    headers.push(k.clone());
                }
            }
        }
    }
    let cells: Vec<Vec<String>> = items
        .iter()
        .map(|item| {
            headers
                .iter()
                .map(|h| item.get(h).map(cell).unwrap_or_default())
                .collect()
        })
        .collect();
    let numeric: Vec<bool> = (0..headers.len())
        .map(|c| items.iter().all(|i| i.get(&headers[c]).is_none_or(Value::is_number)))
        .collect();
    let widths: Vec<usize> = (0..headers.len())
        .map(|c| {
            cells
                .iter()
                .map(|r| r[c].len())
                .chain([headers[c].len()])
                .max()
                .unwrap_or(0)
        })
        .collect();
    let line = |row: &[String]| -> String {
        let parts: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                let w = widths[c];
                if numeric[c] {
                    format!("{s:>w$}")
                } else {
                    format!("{s:<w$}")
                }
            })
            .collect();
        parts.join("  ").trim_end().to_owned() + "\n"
    };
    let mut out = line(&headers);
    let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
    out.push_str(&line(&rule));
    for row in &cells {
        out.push_str(&line(row));
    }
    out
}
