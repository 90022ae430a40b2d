//! Append-only store of rater and model window verdicts.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::files::{jsonl_bytes, read_jsonl, write_atomic};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Model,
    Rater,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowVerdict {
    Artifact,
    Clean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnnotationRecord {
    pub recording_id: String,
    pub epoch_index: usize,
    pub window_index: usize,
    pub source: Source,
    pub verdict: WindowVerdict,
    pub threshold_at_decision: f64,
    /// RFC 3339 (ISO-8601) time of the decision.
    pub timestamp: String,
}

impl AnnotationRecord {
    pub fn key(&self) -> (String, usize, usize, Source) {
        (self.recording_id.clone(), self.epoch_index, self.window_index, self.source)
    }
}

#[derive(Debug)]
pub enum InsertError {
    Duplicate,
    Io(anyhow::Error),
}

/// Records in insertion order plus a uniqueness index. Every insert
/// rewrites the file through a temporary file and a rename, so the file on
/// disk always holds whole records.
#[derive(Debug)]
pub struct AnnotationStore {
    path: PathBuf,
    records: Vec<AnnotationRecord>,
    keys: HashSet<(String, usize, usize, Source)>,
}

impl AnnotationStore {
    pub fn open(path: &Path) -> Result<Self> {
        let records: Vec<AnnotationRecord> = if path.exists() { read_jsonl(path)? } else { Vec::new() };
        let mut keys = HashSet::new();
        for r in &records {
            anyhow::ensure!(keys.insert(r.key()), "{} holds a duplicate record {:?}", path.display(), r.key());
        }
        Ok(Self { path: path.to_path_buf(), records, keys })
    }

    pub fn insert(&mut self, rec: AnnotationRecord) -> std::result::Result<(), InsertError> {
        if self.keys.contains(&rec.key()) {
            return Err(InsertError::Duplicate);
        }
        let mut bytes = if self.path.exists() {
            std::fs::read(&self.path).with_context(|| format!("reading {}", self.path.display())).map_err(InsertError::Io)?
        } else {
            Vec::new()
        };
        bytes.extend(jsonl_bytes(std::slice::from_ref(&rec)).map_err(InsertError::Io)?);
        write_atomic(&self.path, &bytes).map_err(InsertError::Io)?;
        self.keys.insert(rec.key());
        self.records.push(rec);
        Ok(())
    }

    pub fn for_recording(&self, id: &str) -> Vec<AnnotationRecord> {
        self.records.iter().filter(|r| r.recording_id == id).cloned().collect()
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}
