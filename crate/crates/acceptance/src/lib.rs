//! Synthetic end-to-end run shared by the acceptance target and the
//! `end_to_end` example.

use std::time::{Duration, Instant};

use eegart_core::dataset::corpus::synthetic_labels;
use eegart_core::dataset::labels::label_epochs;
use eegart_core::dataset::{generate_corpus, SyntheticSpec};
use eegart_core::detectors::{std_detect, std_roc, StdDetectorConfig};
use eegart_core::error::Result;
use eegart_core::evaluation::{localize_all, roc_auc, sensitivity_specificity, sweep_localization_threshold, RocPoint};
use eegart_core::models::{ModelKind, Profile};
use eegart_core::pipeline::{epoch_probabilities, flagged_maps, train_on_subjects, TrainPlan, TrainSummary};
use eegart_core::signal::{prepare, segment_epochs, Label, EPOCH_S};
use serde::Serialize;

/// Corpus used for the end-to-end checks: 24 subjects of 100 scored epochs
/// with artifacts in 4.5% of epochs.
pub fn corpus_spec() -> SyntheticSpec {
    SyntheticSpec { seed: 2024, subjects: 24, artifact_rate: 0.045, ..Default::default() }
}

pub fn train_plan(max_epochs: usize, patience: usize) -> TrainPlan {
    TrainPlan { max_epochs, patience, ..TrainPlan::new(ModelKind::CnnCbam, Profile::Toy, 7) }
}

#[derive(Debug, Clone, Serialize)]
pub struct Localization {
    pub flagged_epochs: usize,
    /// Best-gmean point of the threshold sweep on the test split.
    pub best: RocPoint,
    /// Threshold picked on validation, applied to the test split.
    pub validation_threshold: Option<f64>,
    pub at_validation_threshold: Option<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EndToEnd {
    pub epochs: usize,
    pub artifact_epochs: usize,
    pub summary: TrainSummary,
    pub test_epochs: usize,
    pub test_artifacts: usize,
    pub model_auc: f64,
    pub model_auc_exact: f64,
    pub std_auc: f64,
    pub std_auc_exact: f64,
    pub localization: Option<Localization>,
    pub train_time: Duration,
    pub total_time: Duration,
}

pub fn end_to_end(spec: &SyntheticSpec, plan: &TrainPlan) -> Result<EndToEnd> {
    let start = Instant::now();
    let corpus = generate_corpus(spec)?;
    let mut subjects = Vec::with_capacity(corpus.len());
    let mut prepared = Vec::with_capacity(corpus.len());
    for syn in &corpus {
        let rec = prepare(&syn.recording)?;
        let epochs = label_epochs(&segment_epochs(&rec, EPOCH_S), &syn.truth, rec.start_offset_s)?;
        debug_assert_eq!(epochs.len(), synthetic_labels(syn)?.len());
        subjects.push((syn.recording.id.clone(), epochs));
        prepared.push(rec);
    }
    let epochs = subjects.iter().map(|s| s.1.len()).sum();
    let artifact_epochs = subjects.iter().flat_map(|s| &s.1).filter(|e| e.label == Label::Artifact).count();

    let t0 = Instant::now();
    let trained = train_on_subjects(subjects, plan)?;
    let train_time = t0.elapsed();

    let test: Vec<_> = trained.test.epochs.iter().filter(|e| e.label != Label::Unlabeled).collect();
    let truth: Vec<bool> = test.iter().map(|e| e.label == Label::Artifact).collect();
    let model_roc = roc_auc(&epoch_probabilities(&trained.model, &test)?, &truth)?;

    // The std detector scores each test recording as a whole night.
    let mut std_scores = Vec::new();
    let mut std_truth = Vec::new();
    for id in trained.test.subjects() {
        let idx = corpus.iter().position(|s| s.recording.id == id).expect("test subject comes from the corpus");
        let det = std_detect(&prepared[idx], &StdDetectorConfig::default())?;
        let labels = synthetic_labels(&corpus[idx])?;
        for (score, l) in det.epoch_scores.iter().zip(&labels) {
            if l.label != Label::Unlabeled {
                std_scores.push(*score);
                std_truth.push(l.label == Label::Artifact);
            }
        }
    }
    let std = std_roc(&std_scores, &std_truth)?;

    let (maps, labels) = flagged_maps(&trained.model, &test, trained.summary.operating_point.threshold)?;
    let localization = match sweep_localization_threshold(&maps, &labels) {
        Ok(sweep) => {
            let validation_threshold = trained.summary.localization_threshold;
            let at_validation_threshold = match validation_threshold {
                Some(t) => {
                    let c = localize_all(&maps, &labels, t)?.confusion();
                    sensitivity_specificity(&c).ok()
                }
                None => None,
            };
            Some(Localization { flagged_epochs: maps.len(), best: sweep.best, validation_threshold, at_validation_threshold })
        }
        Err(_) => None,
    };

    Ok(EndToEnd {
        epochs,
        artifact_epochs,
        test_epochs: test.len(),
        test_artifacts: truth.iter().filter(|&&t| t).count(),
        model_auc: model_roc.auc,
        model_auc_exact: model_roc.auc_exact,
        std_auc: std.auc,
        std_auc_exact: std.auc_exact,
        summary: trained.summary,
        localization,
        train_time,
        total_time: start.elapsed(),
    })
}
