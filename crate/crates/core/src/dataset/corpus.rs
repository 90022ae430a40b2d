//! On-disk layout of a recording directory:
//!
//! ```text
//! manifest.json           optional {spec, subjects}
//! <id>.rec.json/.rec.f32  raw recording
//! <id>.labels.jsonl       one LabelRecord per epoch
//! <id>.truth.json         artifact intervals (synthetic data)
//! <id>.stages.jsonl       one StageRecord per epoch
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::labels::{
    label_epochs, label_records, read_jsonl, read_truth, write_jsonl, write_truth, LabelRecord, Stage, StageRecord,
    TruthInterval,
};
use super::synth::{generate_corpus, SyntheticRecording, SyntheticSpec};
use crate::error::{CoreError, Result};
use crate::signal::io::{read_raw, write_raw};
use crate::signal::{prepare, segment_epochs, Epoch, Recording, EPOCH_S};

pub const REC_SUFFIX: &str = ".rec.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub spec: SyntheticSpec,
    pub subjects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Subject {
    pub id: String,
    pub recording: Recording,
    pub labels: Option<Vec<LabelRecord>>,
    pub truth: Option<Vec<TruthInterval>>,
    pub stages: Option<Vec<Stage>>,
}

pub fn recording_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}{REC_SUFFIX}"))
}

pub fn labels_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.labels.jsonl"))
}

pub fn truth_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.truth.json"))
}

pub fn stages_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.stages.jsonl"))
}

/// Labels for the preprocessed epochs of a synthetic recording.
pub fn synthetic_labels(syn: &SyntheticRecording) -> Result<Vec<LabelRecord>> {
    let prepared = prepare(&syn.recording)?;
    let epochs = label_epochs(&segment_epochs(&prepared, EPOCH_S), &syn.truth, prepared.start_offset_s)?;
    Ok(label_records(&syn.recording.id, &epochs))
}

/// Generates and writes every subject of `spec`; returns the subject ids.
pub fn write_synthetic_corpus(dir: &Path, spec: &SyntheticSpec) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    let corpus = generate_corpus(spec)?;
    let mut ids = Vec::with_capacity(corpus.len());
    for syn in &corpus {
        let id = syn.recording.id.clone();
        write_raw(&syn.recording, &recording_path(dir, &id), 1.0)?;
        write_truth(&truth_path(dir, &id), &syn.truth)?;
        write_jsonl(&labels_path(dir, &id), &synthetic_labels(syn)?)?;
        let stages: Vec<StageRecord> = syn
            .stages
            .iter()
            .enumerate()
            .map(|(i, s)| StageRecord { epoch_index: i, stage: *s })
            .collect();
        write_jsonl(&stages_path(dir, &id), &stages)?;
        ids.push(id);
    }
    let manifest = CorpusManifest {
        spec: spec.clone(),
        subjects: ids.clone(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_vec_pretty(&manifest)?)?;
    Ok(ids)
}

/// Subject ids in a directory: the manifest order if present, else sorted
/// recording file names.
pub fn list_subjects(dir: &Path) -> Result<Vec<String>> {
    let manifest = dir.join("manifest.json");
    if manifest.exists() {
        let m: CorpusManifest = serde_json::from_slice(&std::fs::read(manifest)?)?;
        return Ok(m.subjects);
    }
    let mut ids: Vec<String> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok())
        .filter_map(|e| e.file_name().to_str().and_then(|n| n.strip_suffix(REC_SUFFIX)).map(String::from))
        .collect();
    ids.sort();
    Ok(ids)
}

pub fn load_subject(dir: &Path, id: &str) -> Result<Subject> {
    let recording = read_raw(&recording_path(dir, id))?;
    let labels = labels_path(dir, id);
    let truth = truth_path(dir, id);
    let stages = stages_path(dir, id);
    let stages = if stages.exists() {
        let mut rows: Vec<StageRecord> = read_jsonl(&stages)?;
        rows.sort_by_key(|r| r.epoch_index);
        Some(rows.into_iter().map(|r| r.stage).collect())
    } else {
        None
    };
    Ok(Subject {
        id: id.to_string(),
        recording,
        labels: if labels.exists() { Some(read_jsonl(&labels)?) } else { None },
        truth: if truth.exists() { Some(read_truth(&truth)?) } else { None },
        stages,
    })
}

pub fn load_corpus(dir: &Path) -> Result<Vec<Subject>> {
    let ids = list_subjects(dir)?;
    if ids.is_empty() {
        return Err(CoreError::Format(format!("no recordings in {}", dir.display())));
    }
    ids.iter().map(|id| load_subject(dir, id)).collect()
}

/// Copies epoch and window labels onto epochs by index.
pub fn apply_labels(epochs: &mut [Epoch], labels: &[LabelRecord]) {
    for r in labels {
        if let Some(e) = epochs.get_mut(r.epoch_index) {
            e.label = r.label;
            e.window_labels = r.window_labels;
        }
    }
}

/// Labeled, preprocessed epochs of every subject of a synthetic corpus,
/// generated in memory.
pub fn synthetic_subjects(spec: &SyntheticSpec) -> Result<Vec<(String, Vec<Epoch>)>> {
    generate_corpus(spec)?
        .iter()
        .map(|syn| {
            let prepared = prepare(&syn.recording)?;
            let epochs = label_epochs(&segment_epochs(&prepared, EPOCH_S), &syn.truth, prepared.start_offset_s)?;
            Ok((syn.recording.id.clone(), epochs))
        })
        .collect()
}

/// Preprocessed, scaled and (when available) labeled epochs.
pub fn subject_epochs(subject: &Subject) -> Result<Vec<Epoch>> {
    let prepared = prepare(&subject.recording)?;
    let mut epochs = segment_epochs(&prepared, EPOCH_S);
    if let Some(labels) = &subject.labels {
        apply_labels(&mut epochs, labels);
    }
    Ok(epochs)
}
