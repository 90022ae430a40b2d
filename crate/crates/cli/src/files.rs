//! File formats written by the CLI and read by the service.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use eegart_core::evaluation::Interval;
use serde::{Deserialize, Serialize};

pub const REPORT_SUFFIX: &str = ".report.jsonl";
pub const ATTENTION_SUFFIX: &str = ".attention.jsonl";
pub const ANNOTATIONS_FILE: &str = "annotations.jsonl";
/// Attention threshold used when neither the request nor the model
/// provides one.
pub const DEFAULT_LOCALIZATION_THRESHOLD: f64 = 0.66;

/// One row of a detection report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionRow {
    pub recording_id: String,
    pub model: String,
    pub epoch_index: usize,
    /// Epoch start in recording time.
    pub start_s: f64,
    pub artifact_prob: f64,
    /// `artifact_prob >= threshold`.
    pub flagged: bool,
    pub threshold: f64,
    #[serde(default)]
    pub localization_threshold: Option<f64>,
}

/// One row of `localize` output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationRow {
    pub recording_id: String,
    pub epoch_index: usize,
    pub artifact_prob: f64,
    pub flagged: bool,
    pub threshold: f64,
    pub intervals: Vec<Interval>,
}

pub fn report_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{REPORT_SUFFIX}"))
}

/// Attention maps live next to their report: `x.report.jsonl` pairs with
/// `x.attention.jsonl`; any other name gets the suffix appended to its stem.
pub fn attention_path_for(report: &Path) -> PathBuf {
    let name = report.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let stem = name
        .strip_suffix(REPORT_SUFFIX)
        .or_else(|| name.strip_suffix(".jsonl"))
        .unwrap_or(&name)
        .to_string();
    report.with_file_name(format!("{stem}{ATTENTION_SUFFIX}"))
}

pub fn jsonl_bytes<T: Serialize>(rows: &[T]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    Ok(out)
}

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    eegart_core::dataset::labels::read_jsonl(path).with_context(|| format!("reading {}", path.display()))
}
