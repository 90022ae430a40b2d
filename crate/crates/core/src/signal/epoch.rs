use serde::{Deserialize, Serialize};

use super::recording::Recording;

pub const TARGET_RATE_HZ: f64 = 128.0;
pub const EPOCH_S: f64 = 20.0;
pub const EPOCH_LEN: usize = 2560;
pub const WINDOW_S: f64 = 4.0;
pub const WINDOWS_PER_EPOCH: usize = 5;
pub const HEAD_TRIM_S: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Artifact,
    Clean,
    #[default]
    Unlabeled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Epoch {
    pub epoch_index: usize,
    pub values: Vec<f64>,
    pub label: Label,
    pub window_labels: [Label; WINDOWS_PER_EPOCH],
    /// Set when min-max scaling met a constant epoch.
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scaled {
    pub values: Vec<f64>,
    pub degenerate: bool,
}

/// Min-max scaling to [0, 1]. A constant input maps to 0.5 everywhere and
/// is flagged.
pub fn epoch_minmax_scale(values: &[f64]) -> Scaled {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
    if values.is_empty() || !(hi > lo) {
        return Scaled {
            values: vec![0.5; values.len()],
            degenerate: true,
        };
    }
    let span = hi - lo;
    Scaled {
        values: values.iter().map(|v| (v - lo) / span).collect(),
        degenerate: false,
    }
}

/// Samples per epoch at the recording's rate.
pub fn epoch_samples(rate_hz: f64, epoch_s: f64) -> usize {
    (epoch_s * rate_hz).round() as usize
}

/// Consecutive unscaled epoch slices; the trailing partial epoch is dropped.
pub fn raw_epochs(rec: &Recording, epoch_s: f64) -> Vec<&[f64]> {
    let n = epoch_samples(rec.rate_hz, epoch_s);
    if n == 0 {
        return Vec::new();
    }
    rec.samples.chunks_exact(n).collect()
}

/// Non-overlapping scaled epochs, unlabeled.
pub fn segment_epochs(rec: &Recording, epoch_s: f64) -> Vec<Epoch> {
    raw_epochs(rec, epoch_s)
        .into_iter()
        .enumerate()
        .map(|(i, chunk)| {
            let s = epoch_minmax_scale(chunk);
            Epoch {
                epoch_index: i,
                values: s.values,
                label: Label::Unlabeled,
                window_labels: [Label::Unlabeled; WINDOWS_PER_EPOCH],
                degenerate: s.degenerate,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_examples() {
        assert_eq!(epoch_minmax_scale(&[2.0, 4.0, 6.0]).values, vec![0.0, 0.5, 1.0]);
        let c = epoch_minmax_scale(&[5.0, 5.0, 5.0]);
        assert_eq!(c.values, vec![0.5; 3]);
        assert!(c.degenerate);
    }

    #[test]
    fn epoch_counts() {
        for (secs, n) in [(65.0, 3), (20.0, 1), (19.9, 0)] {
            let len = (secs * 128.0_f64).round() as usize;
            let rec = Recording::new("r", 128.0, (0..len).map(|i| (i % 7) as f64).collect()).unwrap();
            let e = segment_epochs(&rec, EPOCH_S);
            assert_eq!(e.len(), n, "{secs} s");
            assert!(e.iter().all(|e| e.values.len() == EPOCH_LEN));
        }
    }

    #[test]
    fn label_serde() {
        assert_eq!(serde_json::to_string(&Label::Artifact).unwrap(), "\"artifact\"");
    }
}
