use serde::{Deserialize, Serialize};

use super::metrics::{geometric_mean, sensitivity_specificity, ConfusionMatrix};
use crate::error::{CoreError, Result};

pub const GRID_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub se: f64,
    pub sp: f64,
}

impl RocPoint {
    pub fn gmean(&self) -> f64 {
        geometric_mean(self.se, self.sp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    /// Trapezoid area over the threshold grid.
    pub auc: f64,
    /// Rank-based (Mann-Whitney) area, reported alongside for diagnostics.
    pub auc_exact: f64,
    pub best: RocPoint,
}

/// How a score is compared against a threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// positive when score >= threshold
    AtLeast,
    /// positive when score > threshold
    Above,
}

impl Decision {
    pub fn positive(self, score: f64, threshold: f64) -> bool {
        match self {
            Decision::AtLeast => score >= threshold,
            Decision::Above => score > threshold,
        }
    }
}

/// Thresholds 0.00, 0.01, ..., 1.00.
pub fn probability_grid() -> Vec<f64> {
    (0..=GRID_STEPS).map(|k| k as f64 / GRID_STEPS as f64).collect()
}

/// `lo, lo + step, ...` up to and including `hi`, computed from integer
/// multiples so grid values are exact to one rounding.
pub fn threshold_grid(lo: f64, hi: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(hi >= lo) {
        return Err(CoreError::InvalidArgument(format!("bad grid [{lo}, {hi}] step {step}")));
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    let scale = (1.0 / step).round();
    Ok((0..=n)
        .map(|k| {
            let t = lo + k as f64 * step;
            // snap to the decimal grid when step is a reciprocal integer
            if (scale * step - 1.0).abs() < 1e-12 {
                (t * scale).round() / scale
            } else {
                t
            }
        })
        .collect())
}

fn check_classes(labels: &[bool]) -> Result<()> {
    let pos = labels.iter().filter(|&&l| l).count();
    if pos == 0 || pos == labels.len() {
        return Err(CoreError::Undefined("ROC needs both classes".into()));
    }
    Ok(())
}

pub fn confusion_at(scores: &[f64], labels: &[bool], threshold: f64, rule: Decision) -> ConfusionMatrix {
    let mut cm = ConfusionMatrix::default();
    for (&s, &l) in scores.iter().zip(labels) {
        cm.add(rule.positive(s, threshold), l);
    }
    cm
}

/// Area under a set of (1 - sp, se) points, closed with (0, 0) and (1, 1).
pub fn trapezoid_auc(points: &[RocPoint]) -> f64 {
    let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (1.0 - p.sp, p.se)).collect();
    xy.push((0.0, 0.0));
    xy.push((1.0, 1.0));
    xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    xy.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum()
}

/// Probability that a random positive outscores a random negative, ties
/// counting one half.
pub fn rank_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    check_classes(labels)?;
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // midranks over tied groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum_pos += idx[i..=j].iter().filter(|&&k| labels[k]).count() as f64 * mid;
        i = j + 1;
    }
    let np = labels.iter().filter(|&&l| l).count() as f64;
    let nn = labels.len() as f64 - np;
    Ok((rank_sum_pos - np * (np + 1.0) / 2.0) / (np * nn))
}

/// The point with the largest geometric mean; ties go to the lowest
/// threshold.
pub fn best_point(points: &[RocPoint]) -> Option<RocPoint> {
    let mut best: Option<RocPoint> = None;
    for p in points {
        match best {
            Some(b) if p.gmean() < b.gmean() || (p.gmean() == b.gmean() && p.threshold >= b.threshold) => {}
            _ => best = Some(*p),
        }
    }
    best
}

pub fn roc_curve(scores: &[f64], labels: &[bool], thresholds: &[f64], rule: Decision) -> Result<RocCurve> {
    if scores.len() != labels.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if thresholds.is_empty() {
        return Err(CoreError::InvalidArgument("empty threshold grid".into()));
    }
    check_classes(labels)?;
    let points = thresholds
        .iter()
        .map(|&t| {
            let (se, sp) = sensitivity_specificity(&confusion_at(scores, labels, t, rule))?;
            Ok(RocPoint { threshold: t, se, sp })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RocCurve {
        auc: trapezoid_auc(&points),
        auc_exact: rank_auc(scores, labels)?,
        best: best_point(&points).expect("non-empty grid"),
        points,
    })
}

/// Grid ROC over probability thresholds 0 to 1 in steps of 0.01, an epoch
/// being positive when its score is at least the threshold.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    roc_curve(scores, labels, &probability_grid(), Decision::AtLeast)
}
