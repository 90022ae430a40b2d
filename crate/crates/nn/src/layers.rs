//! Parameterized layers built on [`Graph`] ops, plus the serializable layer
//! table used for architecture audits.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{BatchNormStats, Conv1dOpts, Graph, NodeId, PadMode};
use crate::params::{ParamId, ParamSet};
use crate::tensor::Tensor;

pub const BN_MOMENTUM: f64 = 0.9;
pub const BN_EPS: f64 = 1e-5;

/// One row of a model's layer table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad_left: usize,
        pad_right: usize,
        pad_mode: PadMode,
    },
    BatchNorm {
        channels: usize,
    },
    Relu,
    MaxPool {
        size: usize,
    },
    Dropout {
        rate: f64,
    },
    Dense {
        inputs: usize,
        units: usize,
    },
    Sigmoid,
    Softmax,
    GlobalAvgPool,
    BiLstm {
        inputs: usize,
        units: usize,
    },
    Cbam {
        channels: usize,
        reduction: usize,
        spatial_kernel: usize,
    },
}

impl LayerSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                stride,
                ..
            } if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 => {
                bad(format!("conv1d with a zero dimension: {self:?}"))
            }
            LayerSpec::BatchNorm { channels: 0 } => bad("batchnorm over zero channels".into()),
            LayerSpec::MaxPool { size: 0 } => bad("max pool of size 0".into()),
            LayerSpec::Dropout { rate } if !(0.0..1.0).contains(&rate) => {
                bad(format!("dropout rate {rate} outside [0, 1)"))
            }
            LayerSpec::Dense { inputs, units } if inputs == 0 || units == 0 => {
                bad(format!("dense with a zero dimension: {self:?}"))
            }
            LayerSpec::BiLstm { inputs, units } if inputs == 0 || units == 0 => {
                bad(format!("bilstm with a zero dimension: {self:?}"))
            }
            LayerSpec::Cbam {
                channels,
                reduction,
                spatial_kernel,
            } if channels == 0 || reduction == 0 || spatial_kernel % 2 == 0 => {
                bad(format!("cbam needs channels, a reduction and an odd kernel: {self:?}"))
            }
            _ => Ok(()),
        }
    }

    /// Trainable scalar count (running statistics excluded).
    pub fn param_count(&self) -> usize {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel,
                ..
            } => out_channels * in_channels * kernel + out_channels,
            LayerSpec::BatchNorm { channels } => 2 * channels,
            LayerSpec::Dense { inputs, units } => inputs * units + units,
            LayerSpec::BiLstm { inputs, units } => 2 * (4 * units * inputs + 4 * units * units + 4 * units),
            LayerSpec::Cbam {
                channels,
                reduction,
                spatial_kernel,
            } => {
                let hidden = (channels / reduction).max(1);
                (channels * hidden + hidden) + (hidden * channels + channels) + (2 * spatial_kernel + 1)
            }
            _ => 0,
        }
    }
}

/// Uniform in `[-sqrt(6 / fan_in), sqrt(6 / fan_in)]` (He/Kaiming, ReLU gain).
pub fn kaiming_uniform<R: Rng>(rng: &mut R, shape: &[usize], fan_in: usize) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

/// `rows x cols` matrix (rows >= cols) with orthonormal columns, via
/// modified Gram-Schmidt on a Gaussian draw.
pub fn orthogonal<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    assert!(rows >= cols);
    let mut columns: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..rows).map(|_| rng.sample::<f64, _>(StandardNormal)).collect())
        .collect();
    for j in 0..cols {
        for k in 0..j {
            let (done, rest) = columns.split_at_mut(j);
            let proj: f64 = rest[0].iter().zip(&done[k]).map(|(a, b)| a * b).sum();
            rest[0].iter_mut().zip(&done[k]).for_each(|(a, b)| *a -= proj * b);
        }
        let norm = columns[j].iter().map(|v| v * v).sum::<f64>().sqrt();
        columns[j].iter_mut().for_each(|v| *v /= norm);
    }
    let mut data = vec![0.0; rows * cols];
    for (j, col) in columns.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            data[i * cols + j] = *v;
        }
    }
    Tensor::new(vec![rows, cols], data).expect("shape matches")
}

#[derive(Debug, Clone)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub opts: Conv1dOpts,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<R: Rng>(
        ps: &mut ParamSet,
        name: &str,
        group: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        opts: Conv1dOpts,
        rng: &mut R,
    ) -> Self {
        let w = kaiming_uniform(rng, &[out_channels, in_channels, kernel], in_channels * kernel);
        let weight = ps.add(format!("{name}.weight"), group, w);
        let bias = ps.add(format!("{name}.bias"), group, Tensor::zeros(&[out_channels]));
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            opts,
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = g.param(ps, self.weight);
        let b = g.param(ps, self.bias);
        g.conv1d(x, w, Some(b), self.opts)
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Conv1d {
            in_channels: self.in_channels,
            out_channels: self.out_channels,
            kernel: self.kernel,
            stride: self.opts.stride,
            pad_left: self.opts.pad_left,
            pad_right: self.opts.pad_right,
            pad_mode: self.opts.pad_mode,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub inputs: usize,
    pub units: usize,
}

impl Dense {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, group: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let weight = ps.add(format!("{name}.weight"), group, kaiming_uniform(rng, &[units, inputs], inputs));
        let bias = ps.add(format!("{name}.bias"), group, Tensor::zeros(&[units]));
        Self {
            weight,
            bias,
            inputs,
            units,
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let w = g.param(ps, self.weight);
        let b = g.param(ps, self.bias);
        g.dense(x, w, Some(b))
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Dense {
            inputs: self.inputs,
            units: self.units,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm1d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub channels: usize,
}

impl BatchNorm1d {
    pub fn new(ps: &mut ParamSet, name: &str, group: &str, channels: usize) -> Self {
        Self {
            gamma: ps.add(format!("{name}.gamma"), group, Tensor::full(&[channels], 1.0)),
            beta: ps.add(format!("{name}.beta"), group, Tensor::zeros(&[channels])),
            running_mean: ps.add_buffer(format!("{name}.running_mean"), group, Tensor::zeros(&[channels])),
            running_var: ps.add_buffer(format!("{name}.running_var"), group, Tensor::full(&[channels], 1.0)),
            channels,
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let gamma = g.param(ps, self.gamma);
        let beta = g.param(ps, self.beta);
        g.batch_norm(
            x,
            gamma,
            beta,
            BatchNormStats {
                running_mean: self.running_mean,
                running_var: self.running_var,
                params: ps,
                momentum: BN_MOMENTUM,
                eps: BN_EPS,
            },
        )
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::BatchNorm { channels: self.channels }
    }
}

#[derive(Debug, Clone)]
struct LstmDirection {
    w_ih: ParamId,
    w_hh: ParamId,
    bias: ParamId,
}

/// Bidirectional LSTM: `[B, T, D] -> [B, T, 2H]`, forward half first.
#[derive(Debug, Clone)]
pub struct BiLstm {
    forward_dir: LstmDirection,
    backward_dir: LstmDirection,
    pub inputs: usize,
    pub units: usize,
}

impl BiLstm {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, group: &str, inputs: usize, units: usize, rng: &mut R) -> Self {
        let mut dir = |suffix: &str, rng: &mut R| {
            let w_ih = kaiming_uniform(rng, &[4 * units, inputs], inputs);
            let w_hh = orthogonal(rng, 4 * units, units);
            let mut b = Tensor::zeros(&[4 * units]);
            // forget-gate bias 1
            b.data_mut()[units..2 * units].iter_mut().for_each(|v| *v = 1.0);
            LstmDirection {
                w_ih: ps.add(format!("{name}.{suffix}.w_ih"), group, w_ih),
                w_hh: ps.add(format!("{name}.{suffix}.w_hh"), group, w_hh),
                bias: ps.add(format!("{name}.{suffix}.bias"), group, b),
            }
        };
        let forward_dir = dir("fwd", rng);
        let backward_dir = dir("bwd", rng);
        Self {
            forward_dir,
            backward_dir,
            inputs,
            units,
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let run = |g: &mut Graph, d: &LstmDirection, reverse: bool| -> Result<NodeId> {
            let wi = g.param(ps, d.w_ih);
            let wh = g.param(ps, d.w_hh);
            let b = g.param(ps, d.bias);
            g.lstm(x, wi, wh, b, reverse)
        };
        let f = run(g, &self.forward_dir, false)?;
        let b = run(g, &self.backward_dir, true)?;
        let ft = g.transpose12(f)?;
        let bt = g.transpose12(b)?;
        let cat = g.concat(&[ft, bt])?;
        g.transpose12(cat)
    }

    /// `[B, T, D] -> [B, 2H]`: the forward direction's last step next to the
    /// backward direction's first step, i.e. each direction's final state.
    pub fn forward_summary(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let steps = g.value(x).dim(1);
        if steps == 0 {
            return Err(NnError::Shape {
                op: "bilstm",
                detail: "empty sequence".into(),
            });
        }
        let run = |g: &mut Graph, d: &LstmDirection, reverse: bool| -> Result<NodeId> {
            let wi = g.param(ps, d.w_ih);
            let wh = g.param(ps, d.w_hh);
            let b = g.param(ps, d.bias);
            g.lstm(x, wi, wh, b, reverse)
        };
        let f = run(g, &self.forward_dir, false)?;
        let b = run(g, &self.backward_dir, true)?;
        let f_last = g.time_step(f, steps - 1)?;
        let b_first = g.time_step(b, 0)?;
        g.concat(&[f_last, b_first])
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::BiLstm {
            inputs: self.inputs,
            units: self.units,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn orthogonal_columns_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = orthogonal(&mut rng, 12, 3);
        for a in 0..3 {
            for b in 0..3 {
                let d: f64 = (0..12).map(|i| q.at2(i, a) * q.at2(i, b)).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dropout_rate_validated() {
        assert!(LayerSpec::Dropout { rate: 1.0 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: -0.1 }.validate().is_err());
        assert!(LayerSpec::Dropout { rate: 0.5 }.validate().is_ok());
    }

    #[test]
    fn cbam_spec_validation() {
        let cbam = |channels, reduction, spatial_kernel| LayerSpec::Cbam { channels, reduction, spatial_kernel };
        assert!(cbam(0, 8, 7).validate().is_err());
        assert!(cbam(4, 0, 7).validate().is_err());
        assert!(cbam(4, 8, 6).validate().is_err());
        // a reduction wider than the channel count keeps one hidden unit
        let narrow = cbam(4, 8, 7);
        assert!(narrow.validate().is_ok());
        assert_eq!(narrow.param_count(), 4 + 1 + 4 + 4 + 2 * 7 + 1);
    }

    #[test]
    fn param_counts() {
        let conv = LayerSpec::Conv1d {
            in_channels: 2,
            out_channels: 3,
            kernel: 5,
            stride: 1,
            pad_left: 0,
            pad_right: 0,
            pad_mode: PadMode::Zeros,
        };
        assert_eq!(conv.param_count(), 33);
        assert_eq!(LayerSpec::BiLstm { inputs: 2, units: 3 }.param_count(), 2 * (24 + 36 + 12));
    }
}
