//! Line-delimited JSON memory files.
//!
//! ```text
//! {"format":"oad-memory","version":1,"dim":D,"count":K,"capacity":null,"next_index":N,"checksum":"<sha256 hex>"}
//! {"index":1,"example":{...}}
//! ...
//! ```
//!
//! The checksum covers every byte after the header's newline.

use std::collections::{HashSet, VecDeque};
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::store::{MemoryStore, StoredExample};
use crate::types::Example;

pub const FORMAT_NAME: &str = "oad-memory";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("unsupported memory format version {found} (expected {expected})")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("memory file checksum mismatch (header {expected}, content {actual})")]
    ChecksumMismatch { expected: String, actual: String },
    #[error("malformed memory file at line {line}: {message}")]
    Malformed { line: usize, message: String },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    dim: Option<usize>,
    count: usize,
    capacity: Option<usize>,
    next_index: usize,
    checksum: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn to_string(store: &MemoryStore) -> String {
    let mut body = String::new();
    for entry in &store.entries {
        body.push_str(&serde_json::to_string(entry).expect("stored examples serialize"));
        body.push('\n');
    }
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        dim: store.feature_dim,
        count: store.len(),
        capacity: store.capacity,
        next_index: store.next_index,
        checksum: sha256_hex(body.as_bytes()),
    };
    let mut out = serde_json::to_string(&header).expect("header serializes");
    out.push('\n');
    out.push_str(&body);
    out
}

pub fn from_str(text: &str) -> Result<MemoryStore, PersistError> {
    let malformed = |line: usize, message: String| PersistError::Malformed { line, message };
    let (head, body) = text.split_once('\n').ok_or_else(|| malformed(1, "missing header line".into()))?;

    let header: Header = serde_json::from_str(head).map_err(|e| malformed(1, e.to_string()))?;
    if header.format != FORMAT_NAME {
        return Err(malformed(1, format!("not a memory file (format {:?})", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(PersistError::FormatVersionMismatch { found: header.version, expected: FORMAT_VERSION });
    }
    let actual = sha256_hex(body.as_bytes());
    if actual != header.checksum {
        return Err(PersistError::ChecksumMismatch { expected: header.checksum, actual });
    }

    let mut entries = VecDeque::with_capacity(header.count);
    let mut keys = HashSet::with_capacity(header.count);
    for (i, line) in body.lines().enumerate() {
        let line_no = i + 2;
        let entry: StoredExample = serde_json::from_str(line).map_err(|e| malformed(line_no, e.to_string()))?;
        let Some(feature) = entry.example.feature.as_ref() else {
            return Err(malformed(line_no, "stored example has no feature".into()));
        };
        if Some(feature.dim()) != header.dim {
            return Err(malformed(line_no, format!("feature dimension {} vs header {:?}", feature.dim(), header.dim)));
        }
        let last = entries.back().map_or(0, |e: &StoredExample| e.index);
        if entry.index <= last || entry.index >= header.next_index {
            return Err(malformed(line_no, format!("index {} out of order", entry.index)));
        }
        if !keys.insert(entry.example.triple_key()) {
            return Err(malformed(line_no, "duplicate example".into()));
        }
        entries.push_back(entry);
    }
    if entries.len() != header.count {
        return Err(malformed(1, format!("header count {} but {} records", header.count, entries.len())));
    }
    Ok(MemoryStore {
        entries,
        feature_dim: header.dim,
        capacity: header.capacity,
        next_index: header.next_index,
        keys,
    })
}

pub fn memory_persist(store: &MemoryStore, path: &Path) -> Result<(), PersistError> {
    fs::write(path, to_string(store))?;
    Ok(())
}

pub fn memory_load(path: &Path) -> Result<MemoryStore, PersistError> {
    from_str(&fs::read_to_string(path)?)
}

/// Reads one [`Example`] per line; blank lines are skipped.
pub fn load_examples(path: &Path) -> Result<Vec<Example>, PersistError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(line).map_err(|e| PersistError::Malformed { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_examples(examples: &[Example], path: &Path) -> Result<(), PersistError> {
    let mut text = String::new();
    for e in examples {
        text.push_str(&serde_json::to_string(e).expect("examples serialize"));
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}
