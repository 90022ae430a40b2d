use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::signal::{Epoch, Label, EPOCH_S, WINDOWS_PER_EPOCH, WINDOW_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Spike,
    EmgBurst,
    MotionStep,
    AmplitudeSurge,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 4] = [Self::Spike, Self::EmgBurst, Self::MotionStep, Self::AmplitudeSurge];
}

/// Ground-truth artifact interval in recording time (seconds from the
/// first sample of the untrimmed recording).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub kind: ArtifactKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stage {
    W,
    N1,
    N2,
    N3,
    #[serde(rename = "REM")]
    Rem,
}

impl Stage {
    pub fn is_nrem(self) -> bool {
        matches!(self, Stage::N1 | Stage::N2 | Stage::N3)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub epoch_index: usize,
    pub stage: Stage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub recording_id: String,
    pub epoch_index: usize,
    pub label: Label,
    pub window_labels: [Label; WINDOWS_PER_EPOCH],
}

/// Marks each 4-s window touched by any interval (epoch-local seconds).
pub fn assign_window_labels(epoch: &Epoch, intervals: &[(f64, f64)]) -> Result<Epoch> {
    let mut windows = [Label::Clean; WINDOWS_PER_EPOCH];
    for &(s, e) in intervals {
        if !(s >= 0.0 && s < e && e <= EPOCH_S) {
            return Err(CoreError::IntervalOutOfRange { start_s: s, end_s: e });
        }
        for (k, w) in windows.iter_mut().enumerate() {
            let lo = k as f64 * WINDOW_S;
            if s < lo + WINDOW_S && e > lo {
                *w = Label::Artifact;
            }
        }
    }
    let mut out = epoch.clone();
    out.label = epoch_label(&windows);
    out.window_labels = windows;
    Ok(out)
}

/// Epoch label from window labels: artifact if any window is.
pub fn epoch_label(windows: &[Label]) -> Label {
    if windows.contains(&Label::Artifact) {
        Label::Artifact
    } else if windows.iter().all(|w| *w == Label::Unlabeled) {
        Label::Unlabeled
    } else {
        Label::Clean
    }
}

/// Truth intervals clipped to one epoch, in epoch-local seconds. The epoch
/// starts `start_offset_s + epoch_index * 20` seconds into the recording.
pub fn epoch_local_intervals(truth: &[TruthInterval], start_offset_s: f64, epoch_index: usize) -> Vec<(f64, f64)> {
    let t0 = start_offset_s + epoch_index as f64 * EPOCH_S;
    truth
        .iter()
        .filter_map(|t| {
            let s = (t.start_s - t0).max(0.0);
            let e = (t.end_s - t0).min(EPOCH_S);
            (s < e).then_some((s, e))
        })
        .collect()
}

/// Labels every epoch of a recording whose first sample sits at
/// `start_offset_s`.
pub fn label_epochs(epochs: &[Epoch], truth: &[TruthInterval], start_offset_s: f64) -> Result<Vec<Epoch>> {
    epochs
        .iter()
        .map(|e| assign_window_labels(e, &epoch_local_intervals(truth, start_offset_s, e.epoch_index)))
        .collect()
}

pub fn label_records(recording_id: &str, epochs: &[Epoch]) -> Vec<LabelRecord> {
    epochs
        .iter()
        .map(|e| LabelRecord {
            recording_id: recording_id.to_string(),
            epoch_index: e.epoch_index,
            label: e.label,
            window_labels: e.window_labels,
        })
        .collect()
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut buf = Vec::new();
    for r in rows {
        serde_json::to_writer(&mut buf, r)?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let f = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for line in f.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line)?);
    }
    Ok(out)
}

pub fn write_truth(path: &Path, truth: &[TruthInterval]) -> Result<()> {
    std::fs::write(path, serde_json::to_vec_pretty(truth)?)?;
    Ok(())
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthInterval>> {
    Ok(serde_json::from_slice(&std::fs::read(path)?)?)
}
