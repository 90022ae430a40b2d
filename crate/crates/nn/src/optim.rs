use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::params::{ParamEntry, ParamKind, ParamSet};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over a fixed subset of a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct Adam {
    cfg: AdamConfig,
    active: Vec<bool>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl Adam {
    /// Optimizes every trainable weight.
    pub fn new(cfg: AdamConfig, params: &ParamSet) -> Self {
        Self::with_filter(cfg, params, |_| true)
    }

    /// Optimizes only the trainable weights accepted by `filter`; the rest are
    /// left untouched by [`Adam::step`].
    pub fn with_filter(cfg: AdamConfig, params: &ParamSet, filter: impl Fn(&ParamEntry) -> bool) -> Self {
        let active = params
            .entries()
            .iter()
            .map(|e| e.kind == ParamKind::Weight && filter(e))
            .collect();
        let zeros: Vec<Vec<f64>> = params.entries().iter().map(|e| vec![0.0; e.value.len()]).collect();
        Self {
            cfg,
            active,
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update from the gradients stored in `params`. A non-finite
    /// gradient aborts the step before any parameter changes.
    pub fn step(&mut self, params: &mut ParamSet) -> Result<()> {
        for (e, _) in params.entries().iter().zip(&self.active).filter(|(_, a)| **a) {
            if let Some((index, &value)) = e.grad.iter().enumerate().find(|(_, g)| !g.is_finite()) {
                return Err(NnError::NonFiniteGradient {
                    param: e.name.clone(),
                    index,
                    value,
                });
            }
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (idx, e) in params.entries_mut().iter_mut().enumerate() {
            if !self.active[idx] {
                continue;
            }
            let (m, v) = (&mut self.m[idx], &mut self.v[idx]);
            for (((p, &g), mi), vi) in e.value.data_mut().iter_mut().zip(&e.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *p -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn single(value: f64) -> ParamSet {
        let mut ps = ParamSet::new();
        ps.add("w", "all", Tensor::scalar(value));
        ps
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut ps = single(1.5);
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        for _ in 0..10 {
            opt.step(&mut ps).unwrap();
        }
        assert_eq!(ps.entries()[0].value.data()[0], 1.5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // bias-corrected first step: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
        for g in [0.3, -7.0, 1e3] {
            let mut ps = single(0.0);
            ps.entries_mut()[0].grad[0] = g;
            let cfg = AdamConfig {
                lr: 0.01,
                ..AdamConfig::default()
            };
            let mut opt = Adam::new(cfg, &ps);
            opt.step(&mut ps).unwrap();
            let moved = ps.entries()[0].value.data()[0];
            let expected = -0.01 * g / (g.abs() + 1e-8);
            assert!((moved - expected).abs() < 1e-15, "{moved} vs {expected}");
        }
    }

    #[test]
    fn quadratic_bowl_converges() {
        let mut ps = single(1.0);
        let cfg = AdamConfig {
            lr: 0.05,
            ..AdamConfig::default()
        };
        let mut opt = Adam::new(cfg, &ps);
        for _ in 0..500 {
            let w = ps.entries()[0].value.data()[0];
            ps.entries_mut()[0].grad[0] = 2.0 * w;
            opt.step(&mut ps).unwrap();
        }
        assert!(ps.entries()[0].value.data()[0].abs() < 1e-2);
    }

    #[test]
    fn nan_gradient_aborts_without_update() {
        let mut ps = single(2.0);
        ps.entries_mut()[0].grad[0] = f64::NAN;
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        let err = opt.step(&mut ps).unwrap_err();
        assert!(matches!(err, NnError::NonFiniteGradient { ref param, index: 0, .. } if param == "w"));
        assert_eq!(ps.entries()[0].value.data()[0], 2.0);
        assert_eq!(opt.steps_taken(), 0);
    }

    #[test]
    fn filtered_params_stay_frozen() {
        let mut ps = ParamSet::new();
        ps.add("a", "conv", Tensor::scalar(1.0));
        ps.add("b", "dense", Tensor::scalar(1.0));
        for e in ps.entries_mut() {
            e.grad[0] = 1.0;
        }
        let mut opt = Adam::with_filter(AdamConfig::default(), &ps, |e| e.group == "conv");
        opt.step(&mut ps).unwrap();
        assert!(ps.entries()[0].value.data()[0] < 1.0);
        assert_eq!(ps.entries()[1].value.data()[0], 1.0);
    }
}
