//! Central finite differences for checking analytic gradients.

use crate::error::Result;
use crate::graph::{Graph, Mode, NodeId};
use crate::params::{ParamKind, ParamSet};
use crate::tensor::Tensor;

/// Central-difference derivative of `f` with respect to each listed
/// coordinate of `x`; `x` is restored afterwards.
pub fn numeric_grad(x: &mut [f64], coords: &[usize], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    coords
        .iter()
        .map(|&i| {
            let orig = x[i];
            x[i] = orig + step;
            let up = f(x);
            x[i] = orig - step;
            let down = f(x);
            x[i] = orig;
            (up - down) / (2.0 * step)
        })
        .collect()
}

/// `||a - b|| / max(||a|| + ||b||, 1e-12)` over paired gradient entries.
pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb: f64 = numeric.iter().map(|b| b * b).sum::<f64>().sqrt();
    diff / (na + nb).max(1e-12)
}

/// Evenly spread coordinate sample of at most `max` indices out of `len`.
pub fn spread_coords(len: usize, max: usize) -> Vec<usize> {
    if len <= max {
        return (0..len).collect();
    }
    (0..max).map(|k| k * len / max + (k * 7919) % (len / max).max(1)).collect()
}

/// Checks the gradient of a scalar graph with respect to each input tensor.
/// `build` is re-run for every perturbation with the same mode and seed, so
/// dropout masks stay fixed. Returns one relative error per input.
pub fn check_inputs(
    mode: Mode,
    seed: u64,
    inputs: &[Tensor],
    max_coords: usize,
    step: f64,
    build: impl Fn(&mut Graph, &[NodeId]) -> Result<NodeId>,
) -> Result<Vec<f64>> {
    let mut g = Graph::new(mode, seed);
    let ids: Vec<NodeId> = inputs.iter().map(|t| g.input_with_grad(t.clone())).collect();
    let out = build(&mut g, &ids)?;
    g.backward(out)?;
    let mut errors = Vec::with_capacity(inputs.len());
    for (k, t) in inputs.iter().enumerate() {
        let coords = spread_coords(t.len(), max_coords);
        let grad = g.grad(ids[k]).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; t.len()]);
        let analytic: Vec<f64> = coords.iter().map(|&i| grad[i]).collect();
        let mut data = t.data().to_vec();
        let numeric = numeric_grad(&mut data, &coords, step, |d| {
            let mut g = Graph::new(mode, seed);
            let ids: Vec<NodeId> = inputs
                .iter()
                .enumerate()
                .map(|(j, orig)| {
                    let v = if j == k {
                        Tensor::new(orig.shape().to_vec(), d.to_vec()).expect("same shape")
                    } else {
                        orig.clone()
                    };
                    g.input_with_grad(v)
                })
                .collect();
            let out = build(&mut g, &ids).expect("forward succeeded once");
            g.value(out).data()[0]
        });
        errors.push(relative_error(&analytic, &numeric));
    }
    Ok(errors)
}

/// Analytic and central-difference gradients at the sampled coordinates of
/// one trainable tensor.
#[derive(Debug, Clone)]
pub struct ParamGradients {
    pub name: String,
    pub analytic: Vec<f64>,
    pub numeric: Vec<f64>,
}

impl ParamGradients {
    pub fn relative_error(&self) -> f64 {
        relative_error(&self.analytic, &self.numeric)
    }

    pub fn max_abs_error(&self) -> f64 {
        self.analytic.iter().zip(&self.numeric).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

/// Like [`check_params`] but keeps the sampled gradient values, for callers
/// that need an absolute floor next to the relative error.
pub fn param_gradients(
    params: &mut ParamSet,
    mode: Mode,
    seed: u64,
    max_coords: usize,
    step: f64,
    build: impl Fn(&mut Graph, &ParamSet) -> Result<NodeId>,
) -> Result<Vec<ParamGradients>> {
    let mut g = Graph::new(mode, seed);
    let out = build(&mut g, params)?;
    g.backward(out)?;
    let mut scratch = params.clone();
    scratch.zero_grad();
    g.accumulate_param_grads(&mut scratch)?;
    let mut results = Vec::new();
    for id in params.ids().collect::<Vec<_>>() {
        if params.entry(id).kind != ParamKind::Weight {
            continue;
        }
        let n = params.get(id).len();
        let coords = spread_coords(n, max_coords);
        let analytic: Vec<f64> = coords.iter().map(|&i| scratch.entry(id).grad[i]).collect();
        let mut data = params.get(id).data().to_vec();
        let numeric = numeric_grad(&mut data, &coords, step, |d| {
            params.get_mut(id).data_mut().copy_from_slice(d);
            let mut g = Graph::new(mode, seed);
            let out = build(&mut g, params).expect("forward succeeded once");
            g.value(out).data()[0]
        });
        params.get_mut(id).data_mut().copy_from_slice(&data);
        results.push(ParamGradients { name: params.entry(id).name.clone(), analytic, numeric });
    }
    Ok(results)
}

/// Checks the gradient of a scalar graph with respect to every trainable
/// tensor in `params`. Returns `(name, relative error)` pairs.
pub fn check_params(
    params: &mut ParamSet,
    mode: Mode,
    seed: u64,
    max_coords: usize,
    step: f64,
    build: impl Fn(&mut Graph, &ParamSet) -> Result<NodeId>,
) -> Result<Vec<(String, f64)>> {
    Ok(param_gradients(params, mode, seed, max_coords, step, build)?
        .into_iter()
        .map(|p| {
            let e = p.relative_error();
            (p.name, e)
        })
        .collect())
}
