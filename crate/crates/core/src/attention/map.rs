use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub const ATTENTION_POWER: i32 = 4;
pub const EDGE_EXCLUSION_S: f64 = 0.7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub epoch_index: usize,
    pub time_scale_s_per_step: f64,
    pub values: Vec<f64>,
    #[serde(default = "default_edge")]
    pub edge_exclusion_s: f64,
    /// Flat (or empty) maps carry no localization signal.
    #[serde(default)]
    pub degenerate: bool,
}

fn default_edge() -> f64 {
    EDGE_EXCLUSION_S
}

impl AttentionMap {
    pub fn excluded_steps(&self) -> usize {
        edge_steps(self.edge_exclusion_s, self.time_scale_s_per_step)
    }

    /// Largest value outside the excluded edges.
    pub fn peak(&self) -> f64 {
        let e = self.excluded_steps();
        let n = self.values.len();
        if 2 * e >= n {
            return 0.0;
        }
        self.values[e..n - e].iter().cloned().fold(0.0, f64::max)
    }
}

/// Steps dropped at each edge: the exclusion converted to steps, rounded up.
pub fn edge_steps(edge_s: f64, step_s: f64) -> usize {
    if edge_s <= 0.0 {
        return 0;
    }
    (edge_s / step_s - 1e-9).ceil() as usize
}

/// `m[l] = sum_c |a[c, l]|^p` for a `[C, L]` row-major map.
pub fn raw_energy(a: &[f64], channels: usize, p: i32) -> Vec<f64> {
    let l = a.len() / channels.max(1);
    let mut m = vec![0.0; l];
    for row in a.chunks_exact(l.max(1)).take(channels) {
        for (acc, v) in m.iter_mut().zip(row) {
            *acc += v.abs().powi(p);
        }
    }
    m
}

/// Activation energy of a `[C, L]` feature map, min-max normalized over the
/// steps that survive edge exclusion; excluded steps are 0.
pub fn activation_attention_map(
    a: &[f64],
    channels: usize,
    p: i32,
    epoch_index: usize,
    time_scale_s_per_step: f64,
    edge_exclusion_s: f64,
) -> Result<AttentionMap> {
    if channels == 0 || a.is_empty() || a.len() % channels != 0 {
        return invalid(format!("attention input of {} values over {channels} channels", a.len()));
    }
    if !(time_scale_s_per_step > 0.0) {
        return invalid(format!("time scale {time_scale_s_per_step}"));
    }
    let raw = raw_energy(a, channels, p);
    let n = raw.len();
    let e = edge_steps(edge_exclusion_s, time_scale_s_per_step);
    let mut values = vec![0.0; n];
    let mut degenerate = true;
    if 2 * e < n {
        let region = &raw[e..n - e];
        let lo = region.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = region.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            degenerate = false;
            for (v, r) in values[e..n - e].iter_mut().zip(region) {
                *v = (r - lo) / (hi - lo);
            }
        }
    }
    Ok(AttentionMap {
        epoch_index,
        time_scale_s_per_step,
        values,
        edge_exclusion_s,
        degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let m = activation_attention_map(&[0.0, 1.0, 2.0], 1, 4, 0, 0.5, 0.0).unwrap();
        assert_eq!(m.values, vec![0.0, 1.0 / 16.0, 1.0]);
        assert!(!m.degenerate);
    }

    #[test]
    fn symmetric_channels_give_flat_map() {
        let m = activation_attention_map(&[1.0, 0.0, 0.0, 1.0], 2, 4, 0, 0.5, 0.0).unwrap();
        assert_eq!(raw_energy(&[1.0, 0.0, 0.0, 1.0], 2, 4), vec![1.0, 1.0]);
        assert!(m.degenerate);
        assert_eq!(m.values, vec![0.0, 0.0]);
    }

    #[test]
    fn edges_excluded() {
        assert_eq!(edge_steps(0.7, 0.5), 2);
        assert_eq!(edge_steps(0.5, 0.5), 1);
        let a: Vec<f64> = (0..10).map(|i| if i == 0 { 100.0 } else { i as f64 }).collect();
        let m = activation_attention_map(&a, 1, 4, 3, 0.5, 0.7).unwrap();
        assert_eq!(&m.values[..2], &[0.0, 0.0]);
        assert_eq!(&m.values[8..], &[0.0, 0.0]);
        assert_eq!(m.values[7], 1.0);
        assert_eq!(m.values[2], 0.0);
        assert_eq!(m.peak(), 1.0);
    }

    #[test]
    fn all_zero_is_degenerate() {
        let m = activation_attention_map(&[0.0; 40], 2, 4, 0, 0.5, 0.7).unwrap();
        assert!(m.degenerate);
        assert!(m.values.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn json_shape() {
        let m = activation_attention_map(&[0.0, 1.0, 2.0], 1, 4, 5, 0.5, 0.0).unwrap();
        let v: serde_json::Value = serde_json::to_value(&m).unwrap();
        assert_eq!(v["epoch_index"], 5);
        assert_eq!(v["time_scale_s_per_step"], 0.5);
        assert_eq!(v["values"].as_array().unwrap().len(), 3);
    }
}
