use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::evaluation::{roc_curve, threshold_grid, Decision, RocCurve};
use crate::signal::{Recording, EPOCH_S, WINDOW_S};

pub const DEFAULT_EPSILON: f64 = 1e-12;
pub const SWEEP_RANGE: (f64, f64) = (0.05, 3.0);
pub const SWEEP_STEP: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StdDetectorConfig {
    pub window_s: f64,
    pub threshold_z: f64,
    pub epsilon: f64,
}

impl Default for StdDetectorConfig {
    fn default() -> Self {
        Self { window_s: WINDOW_S, threshold_z: 1.3, epsilon: DEFAULT_EPSILON }
    }
}

impl StdDetectorConfig {
    pub fn windows_per_epoch(&self) -> Result<usize> {
        let k = EPOCH_S / self.window_s;
        if !(self.window_s > 0.0) || (k - k.round()).abs() > 1e-9 || k.round() < 1.0 {
            return Err(CoreError::InvalidArgument(format!(
                "window of {} s does not divide a {EPOCH_S} s epoch",
                self.window_s
            )));
        }
        Ok(k.round() as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdDetection {
    pub threshold_z: f64,
    pub window_z: Vec<f64>,
    pub window_flags: Vec<bool>,
    /// One flag per complete epoch: the OR of its windows.
    pub epoch_flags: Vec<bool>,
    /// Largest window z of each epoch; an epoch is flagged exactly when this
    /// exceeds the threshold.
    pub epoch_scores: Vec<f64>,
}

/// Population standard deviation.
pub fn population_std(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Spread below this fraction of the mean's magnitude is rounding noise.
const CONSTANT_TOL: f64 = 1e-12;

/// z-scores with the population standard deviation; all zeros when the
/// input is constant up to rounding.
pub fn zscore(x: &[f64]) -> Vec<f64> {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let sd = population_std(x);
    if !(sd > CONSTANT_TOL * mean.abs().max(1.0)) {
        return vec![0.0; x.len()];
    }
    x.iter().map(|v| (v - mean) / sd).collect()
}

/// z-scored log standard deviation of consecutive windows of `window_len`
/// samples; a trailing partial window is dropped.
pub fn window_log_std_z(samples: &[f64], window_len: usize, epsilon: f64) -> Result<Vec<f64>> {
    if window_len == 0 || samples.len() < window_len {
        return Err(CoreError::TooShort {
            duration_s: samples.len() as f64,
            needed_s: window_len as f64,
        });
    }
    let logs: Vec<f64> = samples
        .chunks_exact(window_len)
        .map(|w| (population_std(w) + epsilon).ln())
        .collect();
    Ok(zscore(&logs))
}

fn window_len(rec: &Recording, cfg: &StdDetectorConfig) -> Result<usize> {
    cfg.windows_per_epoch()?;
    let n = (cfg.window_s * rec.rate_hz).round() as usize;
    if rec.len() < n || n == 0 {
        return Err(CoreError::TooShort { duration_s: rec.duration_s(), needed_s: cfg.window_s });
    }
    Ok(n)
}

/// Flags windows whose z-scored log standard deviation exceeds the
/// threshold, over the whole recording at once.
pub fn std_detect(rec: &Recording, cfg: &StdDetectorConfig) -> Result<StdDetection> {
    let per_epoch = cfg.windows_per_epoch()?;
    let window_z = window_log_std_z(&rec.samples, window_len(rec, cfg)?, cfg.epsilon)?;
    let window_flags: Vec<bool> = window_z.iter().map(|&z| z > cfg.threshold_z).collect();
    let epoch_flags = window_flags.chunks_exact(per_epoch).map(|w| w.iter().any(|&f| f)).collect();
    let epoch_scores = window_z
        .chunks_exact(per_epoch)
        .map(|w| w.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
        .collect();
    Ok(StdDetection { threshold_z: cfg.threshold_z, window_z, window_flags, epoch_flags, epoch_scores })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StdSweep {
    pub threshold: f64,
    pub se: f64,
    pub sp: f64,
    pub roc: RocCurve,
}

/// Epoch-level ROC of the detector's max-window z over thresholds
/// 0.05..3 in steps of 0.01.
pub fn std_roc(epoch_scores: &[f64], labels: &[bool]) -> Result<RocCurve> {
    let grid = threshold_grid(SWEEP_RANGE.0, SWEEP_RANGE.1, SWEEP_STEP)?;
    roc_curve(epoch_scores, labels, &grid, Decision::Above)
}

/// Tunes `threshold_z` for the best geometric mean of epoch-level se and
/// sp. `labels[i]` is true when epoch `i` is an artifact.
pub fn sweep_std_threshold(rec: &Recording, labels: &[bool], cfg: &StdDetectorConfig) -> Result<StdSweep> {
    let det = std_detect(rec, cfg)?;
    if labels.len() != det.epoch_scores.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} labels for {} epochs",
            labels.len(),
            det.epoch_scores.len()
        )));
    }
    let roc = std_roc(&det.epoch_scores, labels)?;
    Ok(StdSweep { threshold: roc.best.threshold, se: roc.best.se, sp: roc.best.sp, roc })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flatline_flags_nothing() {
        let rec = Recording::new("flat", 128.0, vec![3.0; 128 * 60]).unwrap();
        let d = std_detect(&rec, &StdDetectorConfig::default()).unwrap();
        assert_eq!(d.window_z.len(), 15);
        assert!(d.window_z.iter().all(|&z| z == 0.0));
        assert_eq!(d.epoch_flags, vec![false; 3]);
    }

    #[test]
    fn window_must_divide_epoch() {
        let cfg = StdDetectorConfig { window_s: 3.0, ..Default::default() };
        assert!(cfg.windows_per_epoch().is_err());
    }

    #[test]
    fn short_recording_is_an_error() {
        let rec = Recording::new("s", 128.0, vec![1.0; 100]).unwrap();
        assert!(std_detect(&rec, &StdDetectorConfig::default()).is_err());
    }
}
