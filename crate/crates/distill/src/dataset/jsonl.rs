//! Line-delimited JSON: one object per LF-terminated line, keys in the
//! record's declared field order.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

/// A record type with a fixed top-level key set.
pub trait Record: Serialize + DeserializeOwned {
    const SCHEMA: &'static str;
    /// Top-level keys in serialization order.
    const FIELDS: &'static [&'static str];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReadMode {
    /// Unknown keys and blank lines are errors.
    #[default]
    Strict,
    /// Unknown keys are kept (where the record has room for them) and blank
    /// lines are skipped.
    Lenient,
}

#[derive(Debug, Error)]
pub enum JsonlError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line} (byte {offset}): malformed JSON: {message}")]
    Malformed { line: usize, offset: u64, message: String },
    #[error("line {line}: {schema} schema violation: {message}")]
    SchemaViolation { line: usize, schema: &'static str, message: String },
}

impl JsonlError {
    fn io(path: &Path, source: io::Error) -> Self {
        JsonlError::Io { path: path.to_path_buf(), source }
    }
}

pub fn write_records<W: Write, T: Record>(mut out: W, records: &[T]) -> io::Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn write_jsonl<T: Record>(path: &Path, records: &[T]) -> Result<(), JsonlError> {
    let file = File::create(path).map_err(|e| JsonlError::io(path, e))?;
    write_records(BufWriter::new(file), records).map_err(|e| JsonlError::io(path, e))
}

fn parse_line<T: Record>(bytes: &[u8], line: usize, offset: u64, mode: ReadMode) -> Result<T, JsonlError> {
    let value: Value =
        serde_json::from_slice(bytes).map_err(|e| JsonlError::Malformed { line, offset, message: e.to_string() })?;
    let violation = |message: String| JsonlError::SchemaViolation { line, schema: T::SCHEMA, message };
    let obj = value.as_object().ok_or_else(|| violation("expected a JSON object".into()))?;
    if mode == ReadMode::Strict {
        if let Some(key) = obj.keys().find(|k| !T::FIELDS.contains(&k.as_str())) {
            return Err(violation(format!("unknown key {key:?}")));
        }
    }
    serde_json::from_value(value).map_err(|e| violation(e.to_string()))
}

/// Reads every record. Line numbers are 1-based; byte offsets point at the
/// start of the offending line.
pub fn read_records<R: Read, T: Record>(input: R, mode: ReadMode) -> Result<Vec<T>, JsonlError> {
    let mut reader = BufReader::new(input);
    let mut buf = Vec::new();
    let mut out = Vec::new();
    let mut offset = 0u64;
    let mut line = 0;
    loop {
        buf.clear();
        let n = reader.read_until(b'\n', &mut buf).map_err(|e| JsonlError::Malformed {
            line: line + 1,
            offset,
            message: e.to_string(),
        })?;
        if n == 0 {
            break;
        }
        line += 1;
        let content = buf.strip_suffix(b"\n").unwrap_or(&buf);
        let content = content.strip_suffix(b"\r").unwrap_or(content);
        if content.iter().all(u8::is_ascii_whitespace) {
            if mode == ReadMode::Strict {
                return Err(JsonlError::Malformed { line, offset, message: "blank line".into() });
            }
        } else {
            out.push(parse_line(content, line, offset, mode)?);
        }
        offset += n as u64;
    }
    Ok(out)
}

pub fn read_jsonl<T: Record>(path: &Path, mode: ReadMode) -> Result<Vec<T>, JsonlError> {
    let file = File::open(path).map_err(|e| JsonlError::io(path, e))?;
    read_records(file, mode)
}
