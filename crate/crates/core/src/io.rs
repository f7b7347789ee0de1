//! Artifact files: delimited text with a one-line provenance header, and
//! JSON documents carrying the same record under a `meta` key.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Names the pipeline stage that produced an artifact and the hash of the
/// effective configuration it ran under.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub stage: String,
    pub config_hash: String,
}

impl ArtifactMeta {
    pub fn new(stage: impl Into<String>, config_hash: impl Into<String>) -> Self {
        Self {
            stage: stage.into(),
            config_hash: config_hash.into(),
        }
    }

    pub fn header_line(&self) -> String {
        format!("# corrcast stage={} config={}\n", self.stage, self.config_hash)
    }
}

/// Writes `body`, prefixed with the provenance comment line when `meta` is given.
pub fn write_text(path: &Path, meta: Option<&ArtifactMeta>, body: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
    }
    let mut out = String::with_capacity(body.len() + 64);
    if let Some(meta) = meta {
        out.push_str(&meta.header_line());
    }
    out.push_str(body);
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut body = serde_json::to_string_pretty(value)?;
    body.push('\n');
    write_text(path, None, &body)
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// CSV reader that skips `#` provenance lines.
pub(crate) fn csv_reader(text: &str, has_headers: bool) -> csv::Reader<&[u8]> {
    csv::ReaderBuilder::new()
        .has_headers(has_headers)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(text.as_bytes())
}

pub(crate) fn parse_f64(cell: &str, line: usize, column: usize) -> Result<f64> {
    let v: f64 = cell.parse().map_err(|_| Error::Parse {
        line,
        column,
        message: format!("not a number: {cell:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            column,
            message: format!("non-finite value: {cell:?}"),
        });
    }
    Ok(v)
}

/// Formats a row of floats with shortest round-trip representation.
pub(crate) fn join_f64(values: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            s.push(',');
        }
        s.push_str(&format!("{v:?}"));
    }
    s
}

/// Reads a headerless numeric matrix (one row per line).
pub fn read_matrix(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rdr = csv_reader(&text, false);
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::LengthMismatch {
                expected: width,
                got: rec.len(),
            });
        }
        let row = rec
            .iter()
            .enumerate()
            .map(|(j, c)| parse_f64(c, i + 1, j + 1))
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn write_matrix(path: &Path, meta: Option<&ArtifactMeta>, rows: &[Vec<f64>]) -> Result<()> {
    let mut body = String::new();
    for row in rows {
        body.push_str(&join_f64(row));
        body.push('\n');
    }
    write_text(path, meta, &body)
}
