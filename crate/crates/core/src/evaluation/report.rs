use serde::{Deserialize, Serialize};

use super::localization::LocalizationSweep;
use super::metrics::ConfusionMatrix;
use super::roc::{RocCurve, RocPoint};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationStats {
    /// Epochs predicted as artifact whose windows were scored.
    pub epochs_scored: usize,
    pub threshold: f64,
    pub se: f64,
    pub sp: f64,
    pub auc: f64,
    pub confusion: ConfusionMatrix,
    pub roc_points: Vec<RocPoint>,
}

impl LocalizationStats {
    pub fn from_sweep(epochs_scored: usize, sweep: &LocalizationSweep, confusion: ConfusionMatrix) -> Self {
        Self {
            epochs_scored,
            threshold: sweep.best.threshold,
            se: sweep.best.se,
            sp: sweep.best.sp,
            auc: sweep.auc,
            confusion,
            roc_points: sweep.points.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    pub recordings: Vec<String>,
    pub epochs: usize,
    pub auc: f64,
    pub auc_exact: f64,
    pub best: RocPoint,
    pub roc_points: Vec<RocPoint>,
    /// Threshold stored with the model at training time.
    pub operating_threshold: f64,
    /// Epoch confusion at the stored threshold.
    pub confusion: ConfusionMatrix,
    /// Epoch confusion at the best grid threshold on this data.
    pub confusion_at_best: ConfusionMatrix,
    pub localization: Option<LocalizationStats>,
}

impl EvalReport {
    pub fn from_roc(model: &str, recordings: Vec<String>, epochs: usize, roc: &RocCurve) -> Self {
        Self {
            model: model.to_string(),
            recordings,
            epochs,
            auc: roc.auc,
            auc_exact: roc.auc_exact,
            best: roc.best,
            roc_points: roc.points.clone(),
            operating_threshold: roc.best.threshold,
            confusion: ConfusionMatrix::default(),
            confusion_at_best: ConfusionMatrix::default(),
            localization: None,
        }
    }
}
