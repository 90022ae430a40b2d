//! Training and operating-point selection on labeled subject splits.

use eegart_nn::train::{train, train_dual_optimizer};
use eegart_nn::{mix_seed, AdamConfig, Samples, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::attention::AttentionMap;
use crate::dataset::smote::{smote_oversample, DEFAULT_K};
use crate::dataset::{split_by_subject, Fractions, LabeledSet};
use crate::error::{CoreError, Result};
use crate::evaluation::{roc_auc, sweep_localization_threshold, RocPoint};
use crate::models::{Model, ModelKind, Profile};
use crate::signal::{Epoch, Label, EPOCH_LEN, WINDOWS_PER_EPOCH};

pub const DEFAULT_LR: f64 = 1e-3;

const STREAM_SMOTE: u64 = 0x51;
const STREAM_TRAIN: u64 = 0x52;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainPlan {
    pub kind: ModelKind,
    pub profile: Profile,
    pub seed: u64,
    pub fractions: Fractions,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub lr: f64,
    pub smote_k: usize,
}

impl TrainPlan {
    pub fn new(kind: ModelKind, profile: Profile, seed: u64) -> Self {
        Self {
            kind,
            profile,
            seed,
            fractions: Fractions::default(),
            batch_size: 128,
            max_epochs: 100,
            patience: 20,
            lr: DEFAULT_LR,
            smote_k: DEFAULT_K,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.batch_size,
            max_epochs: self.max_epochs,
            patience: self.patience,
            adam: AdamConfig { lr: self.lr, ..AdamConfig::default() },
            seed: mix_seed(self.seed, STREAM_TRAIN, 0),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub subjects: Vec<String>,
    pub epochs: usize,
    pub artifacts: usize,
}

impl SplitSummary {
    fn of(set: &LabeledSet) -> Self {
        Self { subjects: set.subjects(), epochs: set.epochs.len(), artifacts: set.count(Label::Artifact) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub plan: TrainPlan,
    pub train: SplitSummary,
    pub validation: SplitSummary,
    pub test: SplitSummary,
    /// Optimizer history (one or two phases), as JSON.
    pub history: serde_json::Value,
    /// Validation operating point on the probability grid.
    pub operating_point: RocPoint,
    pub validation_auc: f64,
    /// Attention threshold tuned on validation epochs predicted as
    /// artifact; absent for models without attention or when the
    /// validation selection lacks either window class.
    pub localization_threshold: Option<f64>,
}

impl TrainSummary {
    /// Metadata stored in the weight file.
    pub fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "threshold": self.operating_point.threshold,
            "localization_threshold": self.localization_threshold,
            "validation_auc": self.validation_auc,
            "train_subjects": self.train.subjects,
            "validation_subjects": self.validation.subjects,
            "test_subjects": self.test.subjects,
        })
    }
}

pub struct Trained {
    pub model: Model,
    pub summary: TrainSummary,
    pub test: LabeledSet,
}

fn labeled(set: &LabeledSet) -> Vec<&Epoch> {
    set.epochs.iter().filter(|e| e.label != Label::Unlabeled).collect()
}

/// Network samples from a split; with `balance`, SMOTE tops the artifact
/// class up to the clean count.
pub fn labeled_samples(set: &LabeledSet, balance: Option<(usize, u64)>) -> Result<Samples> {
    let epochs = labeled(set);
    let mut inputs: Vec<Vec<f64>> = epochs.iter().map(|e| e.values.clone()).collect();
    let mut labels: Vec<usize> = epochs.iter().map(|e| usize::from(e.label == Label::Artifact)).collect();
    if let Some((k, seed)) = balance {
        let minority: Vec<Vec<f64>> = epochs.iter().filter(|e| e.label == Label::Artifact).map(|e| e.values.clone()).collect();
        let majority = epochs.len() - minority.len();
        if minority.len() < 2 {
            return Err(CoreError::InvalidArgument(format!(
                "{:?} split has {} artifact epochs, SMOTE needs at least 2",
                set.split,
                minority.len()
            )));
        }
        if majority > minority.len() {
            let extra = smote_oversample(&minority, k.min(minority.len() - 1), majority - minority.len(), seed)?;
            labels.extend(std::iter::repeat(1).take(extra.len()));
            inputs.extend(extra);
        }
    }
    Ok(Samples::new(inputs, labels, vec![1, EPOCH_LEN])?)
}

pub fn epoch_probabilities(model: &Model, epochs: &[&Epoch]) -> Result<Vec<f64>> {
    let inputs: Vec<&[f64]> = epochs.iter().map(|e| e.values.as_slice()).collect();
    model.predict_proba(&inputs)
}

/// Attention maps and window labels of the epochs predicted as artifact at
/// `threshold`.
pub fn flagged_maps(model: &Model, epochs: &[&Epoch], threshold: f64) -> Result<(Vec<AttentionMap>, Vec<[Label; WINDOWS_PER_EPOCH]>)> {
    let inputs: Vec<&[f64]> = epochs.iter().map(|e| e.values.as_slice()).collect();
    let mut maps = Vec::new();
    let mut labels = Vec::new();
    for (chunk_start, chunk) in inputs.chunks(256).enumerate().map(|(c, ch)| (c * 256, ch)) {
        for (i, inf) in model.infer(chunk, chunk_start)?.into_iter().enumerate() {
            let e = epochs[chunk_start + i];
            if inf.artifact_prob >= threshold {
                let mut map = inf.attention.ok_or_else(|| CoreError::NoAttention(model.kind.to_string()))?;
                map.epoch_index = e.epoch_index;
                maps.push(map);
                labels.push(e.window_labels);
            }
        }
    }
    Ok((maps, labels))
}

/// Splits subjects, balances train and validation with SMOTE, trains, and
/// picks the epoch and attention thresholds on the unbalanced validation
/// split.
pub fn train_on_subjects(subjects: Vec<(String, Vec<Epoch>)>, plan: &TrainPlan) -> Result<Trained> {
    let [train_set, val_set, test_set] = split_by_subject(subjects, plan.fractions)?;
    let train_samples = labeled_samples(&train_set, Some((plan.smote_k, mix_seed(plan.seed, STREAM_SMOTE, 0))))?;
    let val_samples = labeled_samples(&val_set, Some((plan.smote_k, mix_seed(plan.seed, STREAM_SMOTE, 1))))?;
    let mut model = Model::build(plan.kind, plan.profile, plan.seed)?;
    let cfg = plan.train_config();
    let history = if plan.kind == ModelKind::Heuristic1dCnn {
        serde_json::to_value(train_dual_optimizer(&mut model, &train_samples, &val_samples, &cfg)?.1)?
    } else {
        serde_json::to_value(train(&mut model, &train_samples, &val_samples, &cfg)?.1)?
    };
    let val_epochs = labeled(&val_set);
    let truth: Vec<bool> = val_epochs.iter().map(|e| e.label == Label::Artifact).collect();
    let roc = roc_auc(&epoch_probabilities(&model, &val_epochs)?, &truth)?;
    let localization_threshold = if model.attention_shape().is_some() {
        let (maps, labels) = flagged_maps(&model, &val_epochs, roc.best.threshold)?;
        sweep_localization_threshold(&maps, &labels).ok().map(|s| s.best.threshold)
    } else {
        None
    };
    let summary = TrainSummary {
        plan: *plan,
        train: SplitSummary::of(&train_set),
        validation: SplitSummary::of(&val_set),
        test: SplitSummary::of(&test_set),
        history,
        operating_point: roc.best,
        validation_auc: roc.auc,
        localization_threshold,
    };
    Ok(Trained { model, summary, test: test_set })
}
