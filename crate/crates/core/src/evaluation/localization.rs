use serde::{Deserialize, Serialize};

use super::metrics::{sensitivity_specificity, ConfusionMatrix};
use super::roc::{best_point, probability_grid, trapezoid_auc, RocPoint};
use crate::attention::AttentionMap;
use crate::error::{CoreError, Result};
use crate::signal::{Label, EPOCH_S, WINDOWS_PER_EPOCH, WINDOW_S};

/// Epoch-local interval `[start_s, end_s)`.
pub type Interval = (f64, f64);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Tp,
    Fp,
    Tn,
    Fn,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationResult {
    pub threshold: f64,
    pub predicted_intervals: Vec<Vec<Interval>>,
    pub window_verdicts: Vec<[Verdict; WINDOWS_PER_EPOCH]>,
}

impl LocalizationResult {
    pub fn confusion(&self) -> ConfusionMatrix {
        let mut cm = ConfusionMatrix::default();
        for v in self.window_verdicts.iter().flatten() {
            match v {
                Verdict::Tp => cm.tp += 1,
                Verdict::Fp => cm.fp += 1,
                Verdict::Tn => cm.tn += 1,
                Verdict::Fn => cm.fn_ += 1,
            }
        }
        cm
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizationSweep {
    pub points: Vec<RocPoint>,
    pub auc: f64,
    pub best: RocPoint,
}

/// Runs of map steps whose value exceeds `threshold`, as epoch-local
/// seconds. A threshold of zero or below selects every step outside the
/// edge exclusion, since the normalized minimum is exactly zero.
pub fn localize(map: &AttentionMap, threshold: f64) -> Vec<Interval> {
    let n = map.values.len();
    let skip = map.excluded_steps().min(n / 2);
    let dt = map.time_scale_s_per_step;
    let mut out = Vec::new();
    let mut run: Option<usize> = None;
    for i in skip..=n - skip {
        let on = i < n - skip && (threshold <= 0.0 || map.values[i] > threshold);
        match (on, run) {
            (true, None) => run = Some(i),
            (false, Some(s)) => {
                out.push((s as f64 * dt, i as f64 * dt));
                run = None;
            }
            _ => {}
        }
    }
    out
}

fn overlap(a: Interval, b: Interval) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// Window-level verdicts for one epoch.
///
/// An artifact window is a true positive when some predicted interval
/// covers more than half of it, or when more than half of some predicted
/// interval lies inside it; otherwise it is a false negative. A clean
/// window is a false positive when any predicted interval overlaps it.
pub fn window_verdicts(predicted: &[Interval], window_labels: &[Label; WINDOWS_PER_EPOCH]) -> Result<[Verdict; WINDOWS_PER_EPOCH]> {
    for &(s, e) in predicted {
        if !(s >= 0.0 && e <= EPOCH_S && s < e) {
            return Err(CoreError::IntervalOutOfRange { start_s: s, end_s: e });
        }
    }
    let mut out = [Verdict::Tn; WINDOWS_PER_EPOCH];
    for (w, label) in window_labels.iter().enumerate() {
        let win = (w as f64 * WINDOW_S, (w + 1) as f64 * WINDOW_S);
        out[w] = match label {
            Label::Artifact => {
                let credited = predicted.iter().any(|&p| {
                    let ov = overlap(p, win);
                    ov > WINDOW_S / 2.0 || ov > (p.1 - p.0) / 2.0
                });
                if credited {
                    Verdict::Tp
                } else {
                    Verdict::Fn
                }
            }
            Label::Clean => {
                if predicted.iter().any(|&p| overlap(p, win) > 0.0) {
                    Verdict::Fp
                } else {
                    Verdict::Tn
                }
            }
            Label::Unlabeled => {
                return Err(CoreError::InvalidArgument(format!("window {w} has no label")));
            }
        };
    }
    Ok(out)
}

pub fn score_localization(predicted: &[Interval], window_labels: &[Label; WINDOWS_PER_EPOCH]) -> Result<ConfusionMatrix> {
    let mut cm = ConfusionMatrix::default();
    for v in window_verdicts(predicted, window_labels)? {
        match v {
            Verdict::Tp => cm.tp += 1,
            Verdict::Fp => cm.fp += 1,
            Verdict::Tn => cm.tn += 1,
            Verdict::Fn => cm.fn_ += 1,
        }
    }
    Ok(cm)
}

/// Localizes and scores every (map, labels) pair at one threshold.
pub fn localize_all(maps: &[AttentionMap], labels: &[[Label; WINDOWS_PER_EPOCH]], threshold: f64) -> Result<LocalizationResult> {
    if maps.len() != labels.len() {
        return Err(CoreError::InvalidArgument(format!("{} maps for {} label rows", maps.len(), labels.len())));
    }
    let mut predicted_intervals = Vec::with_capacity(maps.len());
    let mut window_verdicts_all = Vec::with_capacity(maps.len());
    for (m, l) in maps.iter().zip(labels) {
        let iv = localize(m, threshold);
        window_verdicts_all.push(window_verdicts(&iv, l)?);
        predicted_intervals.push(iv);
    }
    Ok(LocalizationResult { threshold, predicted_intervals, window_verdicts: window_verdicts_all })
}

/// Sweeps the map threshold over 0..1 in steps of 0.01 and picks the
/// geometric-mean optimum (lowest threshold on ties).
pub fn sweep_localization_threshold(maps: &[AttentionMap], labels: &[[Label; WINDOWS_PER_EPOCH]]) -> Result<LocalizationSweep> {
    let artifact = labels.iter().flatten().filter(|l| **l == Label::Artifact).count();
    let clean = labels.iter().flatten().filter(|l| **l == Label::Clean).count();
    if artifact == 0 || clean == 0 {
        return Err(CoreError::Undefined("localization sweep needs artifact and clean windows".into()));
    }
    let points = probability_grid()
        .into_iter()
        .map(|t| {
            let (se, sp) = sensitivity_specificity(&localize_all(maps, labels, t)?.confusion())?;
            Ok(RocPoint { threshold: t, se, sp })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(LocalizationSweep {
        auc: trapezoid_auc(&points),
        best: best_point(&points).expect("non-empty grid"),
        points,
    })
}
