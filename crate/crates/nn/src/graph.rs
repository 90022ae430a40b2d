//! Tape-based reverse-mode autodiff.
//!
//! A [`Graph`] records every operation of one forward pass as a node holding
//! its output value. [`Graph::backward`] walks the tape in reverse and fills
//! in gradients. Operations are coarse (a whole convolution or LSTM pass is a
//! single node) so the tape stays short and the hot loops stay in plain
//! slices.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{shape_err, NnError, Result};
use crate::params::{ParamId, ParamSet};
use crate::tensor::{axpy, dot, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// How a convolution fills samples outside the input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadMode {
    Zeros,
    Circular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dOpts {
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub pad_mode: PadMode,
}

impl Conv1dOpts {
    pub fn valid(stride: usize) -> Self {
        Self {
            stride,
            pad_left: 0,
            pad_right: 0,
            pad_mode: PadMode::Zeros,
        }
    }

    pub fn symmetric(stride: usize, pad: usize) -> Self {
        Self {
            stride,
            pad_left: pad,
            pad_right: pad,
            pad_mode: PadMode::Zeros,
        }
    }

    /// Padding that yields `ceil(len / stride)` outputs, split as evenly as
    /// possible with the extra sample on the right.
    pub fn same(len: usize, kernel: usize, stride: usize) -> Self {
        let out = len.div_ceil(stride);
        let total = ((out - 1) * stride + kernel).saturating_sub(len);
        Self {
            stride,
            pad_left: total / 2,
            pad_right: total - total / 2,
            pad_mode: PadMode::Zeros,
        }
    }

    pub fn with_mode(mut self, mode: PadMode) -> Self {
        self.pad_mode = mode;
        self
    }

    pub fn out_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let padded = len + self.pad_left + self.pad_right;
        if self.stride == 0 || padded < kernel {
            return None;
        }
        Some((padded - kernel) / self.stride + 1)
    }
}

/// Running statistics handed to a batchnorm node.
pub struct BatchNormStats<'a> {
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub params: &'a ParamSet,
    pub momentum: f64,
    pub eps: f64,
}

#[derive(Debug)]
struct LstmCache {
    /// Post-activation gates `[i, f, g, o]` per (batch, time), each `4H`.
    gates: Vec<f64>,
    cell: Vec<f64>,
    hidden: Vec<f64>,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Conv1d {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        opts: Conv1dOpts,
    },
    Dense {
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
    },
    BatchNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        xhat: Vec<f64>,
        inv_std: Vec<f64>,
        batch_stats: bool,
    },
    Relu(NodeId),
    Sigmoid(NodeId),
    Tanh(NodeId),
    MaxPool {
        x: NodeId,
        argmax: Vec<usize>,
    },
    Dropout {
        x: NodeId,
        mask: Vec<f64>,
    },
    Reshape(NodeId),
    Concat(Vec<NodeId>),
    Transpose12(NodeId),
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    BroadcastMul {
        x: NodeId,
        m: NodeId,
    },
    Mean {
        x: NodeId,
        axis: usize,
    },
    Max {
        x: NodeId,
        argmax: Vec<usize>,
    },
    GlobalAvgPool(NodeId),
    Softmax(NodeId),
    SoftmaxCrossEntropy {
        logits: NodeId,
        targets: Vec<usize>,
        probs: Vec<f64>,
    },
    Lstm {
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b: NodeId,
        reverse: bool,
        cache: LstmCache,
    },
    TimeStep {
        x: NodeId,
        t: usize,
    },
    Sum(NodeId),
    WeightedSum {
        x: NodeId,
        weights: Vec<f64>,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    grad: Option<Vec<f64>>,
    op: Op,
    param: Option<ParamId>,
    requires_grad: bool,
}

pub struct Graph {
    nodes: Vec<Node>,
    mode: Mode,
    rng: ChaCha8Rng,
    buffer_updates: Vec<(ParamId, Vec<f64>)>,
    backward_done: bool,
}

impl Graph {
    pub fn new(mode: Mode, seed: u64) -> Self {
        Self {
            nodes: Vec::new(),
            mode,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer_updates: Vec::new(),
            backward_done: false,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, inputs: &[NodeId]) -> NodeId {
        let requires_grad = inputs.iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            op,
            param: None,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn leaf(&mut self, value: Tensor, param: Option<ParamId>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            grad: None,
            op: Op::Leaf,
            param,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    /// Constant input; no gradient is computed for it.
    pub fn input(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, None, false)
    }

    /// Input whose gradient is wanted (used by gradient checks).
    pub fn input_with_grad(&mut self, value: Tensor) -> NodeId {
        self.leaf(value, None, true)
    }

    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> NodeId {
        self.leaf(params.get(id).clone(), Some(id), true)
    }

    /// Buffer updates (batchnorm running statistics) produced by train-mode
    /// forward passes, in recording order.
    pub fn take_buffer_updates(&mut self) -> Vec<(ParamId, Vec<f64>)> {
        std::mem::take(&mut self.buffer_updates)
    }

    // ---------------------------------------------------------------- ops

    pub fn conv1d(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>, opts: Conv1dOpts) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 3 || ws.len() != 3 || xs[1] != ws[1] {
            return shape_err("conv1d", format!("x {xs:?} vs w {ws:?}"));
        }
        if let Some(b) = b {
            if self.value(b).shape() != [ws[0]] {
                return shape_err("conv1d", format!("bias {:?}, expected [{}]", self.value(b).shape(), ws[0]));
            }
        }
        if opts.pad_mode == PadMode::Circular && (opts.pad_left > xs[2] || opts.pad_right > xs[2]) {
            return shape_err("conv1d", "circular padding longer than the input");
        }
        let (batch, chans, len) = (xs[0], xs[1], xs[2]);
        let (out_ch, kernel) = (ws[0], ws[2]);
        let out_len = opts
            .out_len(len, kernel)
            .ok_or_else(|| NnError::Shape {
                op: "conv1d",
                detail: format!("kernel {kernel} longer than padded input {len}"),
            })?;
        let padded = len + opts.pad_left + opts.pad_right;
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; batch * out_ch * out_len];
        let mut xp = vec![0.0; chans * padded];
        for bi in 0..batch {
            fill_padded(&xv[bi * chans * len..(bi + 1) * chans * len], chans, len, &opts, &mut xp);
            for k in 0..out_ch {
                let bias = bv.map_or(0.0, |b| b[k]);
                let row = &mut out[(bi * out_ch + k) * out_len..(bi * out_ch + k + 1) * out_len];
                for (l, o) in row.iter_mut().enumerate() {
                    let start = l * opts.stride;
                    let mut s = bias;
                    for c in 0..chans {
                        s += dot(
                            &xp[c * padded + start..c * padded + start + kernel],
                            &wv[(k * chans + c) * kernel..(k * chans + c + 1) * kernel],
                        );
                    }
                    *o = s;
                }
            }
        }
        let value = Tensor::new(vec![batch, out_ch, out_len], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Conv1d { x, w, b, opts }, &inputs))
    }

    pub fn dense(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w).shape().to_vec();
        if xs.len() != 2 || ws.len() != 2 || xs[1] != ws[1] {
            return shape_err("dense", format!("x {xs:?} vs w {ws:?}"));
        }
        let (batch, din, dout) = (xs[0], xs[1], ws[0]);
        if let Some(b) = b {
            if self.value(b).shape() != [dout] {
                return shape_err("dense", "bias length");
            }
        }
        let xv = self.value(x).data();
        let wv = self.value(w).data();
        let bv = b.map(|b| self.value(b).data());
        let mut out = vec![0.0; batch * dout];
        for bi in 0..batch {
            let xr = &xv[bi * din..(bi + 1) * din];
            for o in 0..dout {
                out[bi * dout + o] = bv.map_or(0.0, |b| b[o]) + dot(&wv[o * din..(o + 1) * din], xr);
            }
        }
        let value = Tensor::new(vec![batch, dout], out)?;
        let mut inputs = vec![x, w];
        inputs.extend(b);
        Ok(self.push(value, Op::Dense { x, w, b }, &inputs))
    }

    /// Per-channel normalization of `[B, C]` or `[B, C, L]` input. Train mode
    /// normalizes with batch statistics and queues a running-statistics
    /// update; eval mode uses the stored running statistics.
    pub fn batch_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, stats: BatchNormStats<'_>) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() < 2 || xs.len() > 3 {
            return shape_err("batch_norm", format!("input {xs:?}"));
        }
        let (batch, chans) = (xs[0], xs[1]);
        let len = if xs.len() == 3 { xs[2] } else { 1 };
        if self.value(gamma).len() != chans || self.value(beta).len() != chans {
            return shape_err("batch_norm", "affine parameter length");
        }
        let n = batch * len;
        let xv = self.nodes[x.0].value.data();
        let (mean, var, batch_stats) = match self.mode {
            Mode::Train => {
                let mut mean = vec![0.0; chans];
                let mut var = vec![0.0; chans];
                for c in 0..chans {
                    let mut s = 0.0;
                    for bi in 0..batch {
                        s += xv[(bi * chans + c) * len..(bi * chans + c + 1) * len].iter().sum::<f64>();
                    }
                    let m = s / n as f64;
                    let mut v = 0.0;
                    for bi in 0..batch {
                        v += xv[(bi * chans + c) * len..(bi * chans + c + 1) * len]
                            .iter()
                            .map(|t| (t - m) * (t - m))
                            .sum::<f64>();
                    }
                    mean[c] = m;
                    var[c] = v / n as f64;
                }
                let rm = stats.params.get(stats.running_mean).data();
                let rv = stats.params.get(stats.running_var).data();
                let unbias = if n > 1 { n as f64 / (n - 1) as f64 } else { 1.0 };
                let new_mean: Vec<f64> = rm
                    .iter()
                    .zip(&mean)
                    .map(|(r, m)| stats.momentum * r + (1.0 - stats.momentum) * m)
                    .collect();
                let new_var: Vec<f64> = rv
                    .iter()
                    .zip(&var)
                    .map(|(r, v)| stats.momentum * r + (1.0 - stats.momentum) * v * unbias)
                    .collect();
                self.buffer_updates.push((stats.running_mean, new_mean));
                self.buffer_updates.push((stats.running_var, new_var));
                (mean, var, true)
            }
            Mode::Eval => (
                stats.params.get(stats.running_mean).data().to_vec(),
                stats.params.get(stats.running_var).data().to_vec(),
                false,
            ),
        };
        let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + stats.eps).sqrt()).collect();
        let gv = self.value(gamma).data();
        let bv = self.value(beta).data();
        let mut xhat = vec![0.0; xv.len()];
        let mut out = vec![0.0; xv.len()];
        for bi in 0..batch {
            for c in 0..chans {
                let base = (bi * chans + c) * len;
                for i in base..base + len {
                    let h = (xv[i] - mean[c]) * inv_std[c];
                    xhat[i] = h;
                    out[i] = gv[c] * h + bv[c];
                }
            }
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(
            value,
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            },
            &[x, gamma, beta],
        ))
    }

    fn map_unary(&mut self, x: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = self.value(x);
        let data = v.data().iter().map(|&t| f(t)).collect();
        let value = Tensor::new(v.shape().to_vec(), data).expect("same shape");
        self.push(value, op, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        self.map_unary(x, |t| t.max(0.0), Op::Relu(x))
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        self.map_unary(x, sigmoid, Op::Sigmoid(x))
    }

    pub fn tanh(&mut self, x: NodeId) -> NodeId {
        self.map_unary(x, f64::tanh, Op::Tanh(x))
    }

    /// Non-overlapping max pooling over the last axis of `[B, C, L]`; a
    /// trailing remainder shorter than `size` is dropped.
    pub fn max_pool(&mut self, x: NodeId, size: usize) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        if xs.len() != 3 || size == 0 || xs[2] < size {
            return shape_err("max_pool", format!("input {xs:?}, size {size}"));
        }
        let (rows, len) = (xs[0] * xs[1], xs[2]);
        let out_len = len / size;
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(rows * out_len);
        let mut argmax = Vec::with_capacity(rows * out_len);
        for r in 0..rows {
            for j in 0..out_len {
                let start = r * len + j * size;
                let mut best = start;
                for i in start + 1..start + size {
                    if xv[i] > xv[best] {
                        best = i;
                    }
                }
                out.push(xv[best]);
                argmax.push(best);
            }
        }
        let value = Tensor::new(vec![xs[0], xs[1], out_len], out)?;
        Ok(self.push(value, Op::MaxPool { x, argmax }, &[x]))
    }

    /// Inverted dropout: scales kept activations by `1 / (1 - rate)` in train
    /// mode; identity in eval mode.
    pub fn dropout(&mut self, x: NodeId, rate: f64) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(NnError::Config(format!("dropout rate {rate} outside [0, 1)")));
        }
        if self.mode == Mode::Eval || rate == 0.0 {
            return Ok(x);
        }
        let keep = 1.0 - rate;
        let n = self.value(x).len();
        let mask: Vec<f64> = (0..n)
            .map(|_| if self.rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        let v = self.value(x);
        let data = v.data().iter().zip(&mask).map(|(a, m)| a * m).collect();
        let value = Tensor::new(v.shape().to_vec(), data)?;
        Ok(self.push(value, Op::Dropout { x, mask }, &[x]))
    }

    pub fn reshape(&mut self, x: NodeId, shape: Vec<usize>) -> Result<NodeId> {
        let value = self.value(x).clone().reshape(shape)?;
        Ok(self.push(value, Op::Reshape(x), &[x]))
    }

    /// `[B, ...] -> [B, prod(...)]`
    pub fn flatten(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape();
        let b = s[0];
        let rest = s[1..].iter().product();
        self.reshape(x, vec![b, rest])
    }

    /// Concatenates along axis 1. Inputs must agree on axis 0 and on every
    /// axis after 1.
    pub fn concat(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return shape_err("concat", "no inputs");
        }
        let first = self.value(inputs[0]).shape().to_vec();
        if first.len() < 2 {
            return shape_err("concat", format!("input {first:?} has no axis 1"));
        }
        let batch = first[0];
        let tail: Vec<usize> = first[2..].to_vec();
        let inner: usize = tail.iter().product();
        let mut widths = Vec::with_capacity(inputs.len());
        for &i in inputs {
            let s = self.value(i).shape();
            if s.len() != first.len() || s[0] != batch || s[2..] != tail[..] {
                return shape_err("concat", format!("{s:?} incompatible with {first:?}"));
            }
            widths.push(s[1]);
        }
        let total: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(batch * total * inner);
        for bi in 0..batch {
            for (&i, &w) in inputs.iter().zip(&widths) {
                let d = self.value(i).data();
                out.extend_from_slice(&d[bi * w * inner..(bi + 1) * w * inner]);
            }
        }
        let mut shape = vec![batch, total];
        shape.extend(tail);
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Concat(inputs.to_vec()), inputs))
    }

    /// `[B, C, L] -> [B, L, C]`
    pub fn transpose12(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 3 {
            return shape_err("transpose12", format!("input {s:?}"));
        }
        let (b, c, l) = (s[0], s[1], s[2]);
        let xv = self.value(x).data();
        let mut out = vec![0.0; xv.len()];
        for bi in 0..b {
            for ci in 0..c {
                for li in 0..l {
                    out[(bi * l + li) * c + ci] = xv[(bi * c + ci) * l + li];
                }
            }
        }
        let value = Tensor::new(vec![b, l, c], out)?;
        Ok(self.push(value, Op::Transpose12(x), &[x]))
    }

    fn zip_same(&mut self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64, op: Op, name: &'static str) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        if va.shape() != vb.shape() {
            return shape_err(name, format!("{:?} vs {:?}", va.shape(), vb.shape()));
        }
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let value = Tensor::new(va.shape().to_vec(), data)?;
        Ok(self.push(value, op, &[a, b]))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.zip_same(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    /// `x[B, C, L] * m` where `m` is `[B, C, 1]` (per-channel gate) or
    /// `[B, 1, L]` (per-step gate).
    pub fn broadcast_mul(&mut self, x: NodeId, m: NodeId) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ms = self.value(m).shape().to_vec();
        if xs.len() != 3 || ms.len() != 3 || xs[0] != ms[0] {
            return shape_err("broadcast_mul", format!("{xs:?} vs {ms:?}"));
        }
        let (b, c, l) = (xs[0], xs[1], xs[2]);
        let per_channel = ms[1] == c && ms[2] == 1;
        let per_step = ms[1] == 1 && ms[2] == l;
        if !per_channel && !per_step {
            return shape_err("broadcast_mul", format!("{xs:?} vs {ms:?}"));
        }
        let xv = self.value(x).data();
        let mv = self.value(m).data();
        let mut out = vec![0.0; xv.len()];
        for bi in 0..b {
            for ci in 0..c {
                for li in 0..l {
                    let i = (bi * c + ci) * l + li;
                    let g = if per_channel { mv[bi * c + ci] } else { mv[bi * l + li] };
                    out[i] = xv[i] * g;
                }
            }
        }
        let value = Tensor::new(xs, out)?;
        Ok(self.push(value, Op::BroadcastMul { x, m }, &[x, m]))
    }

    fn reduce_dims(&self, x: NodeId, axis: usize, op: &'static str) -> Result<(usize, usize, usize)> {
        let s = self.value(x).shape();
        if s.len() != 3 || !(axis == 1 || axis == 2) {
            return shape_err(op, format!("input {s:?}, axis {axis}"));
        }
        Ok((s[0], s[1], s[2]))
    }

    /// Mean over axis 1 or 2 of a `[B, C, L]` tensor, keeping the axis.
    pub fn mean(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (b, c, l) = self.reduce_dims(x, axis, "mean")?;
        let xv = self.value(x).data();
        let (out, shape) = if axis == 2 {
            let out = (0..b * c)
                .map(|r| xv[r * l..(r + 1) * l].iter().sum::<f64>() / l as f64)
                .collect();
            (out, vec![b, c, 1])
        } else {
            let mut out = vec![0.0; b * l];
            for bi in 0..b {
                for ci in 0..c {
                    for li in 0..l {
                        out[bi * l + li] += xv[(bi * c + ci) * l + li];
                    }
                }
            }
            out.iter_mut().for_each(|v| *v /= c as f64);
            (out, vec![b, 1, l])
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Mean { x, axis }, &[x]))
    }

    /// Max over axis 1 or 2 of a `[B, C, L]` tensor, keeping the axis. Ties
    /// go to the first index.
    pub fn max(&mut self, x: NodeId, axis: usize) -> Result<NodeId> {
        let (b, c, l) = self.reduce_dims(x, axis, "max")?;
        let xv = self.value(x).data();
        let mut argmax = Vec::new();
        let (out, shape) = if axis == 2 {
            let mut out = Vec::with_capacity(b * c);
            for r in 0..b * c {
                let mut best = r * l;
                for i in r * l + 1..(r + 1) * l {
                    if xv[i] > xv[best] {
                        best = i;
                    }
                }
                argmax.push(best);
                out.push(xv[best]);
            }
            (out, vec![b, c, 1])
        } else {
            let mut out = Vec::with_capacity(b * l);
            for bi in 0..b {
                for li in 0..l {
                    let mut best = bi * c * l + li;
                    for ci in 1..c {
                        let i = (bi * c + ci) * l + li;
                        if xv[i] > xv[best] {
                            best = i;
                        }
                    }
                    argmax.push(best);
                    out.push(xv[best]);
                }
            }
            (out, vec![b, 1, l])
        };
        let value = Tensor::new(shape, out)?;
        Ok(self.push(value, Op::Max { x, argmax }, &[x]))
    }

    /// `[B, C, L] -> [B, C]` by averaging over L.
    pub fn global_avg_pool(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 3 {
            return shape_err("global_avg_pool", format!("input {s:?}"));
        }
        let l = s[2];
        let xv = self.value(x).data();
        let out = (0..s[0] * s[1])
            .map(|r| xv[r * l..(r + 1) * l].iter().sum::<f64>() / l as f64)
            .collect();
        let value = Tensor::new(vec![s[0], s[1]], out)?;
        Ok(self.push(value, Op::GlobalAvgPool(x), &[x]))
    }

    /// Row-wise softmax of `[B, K]`.
    pub fn softmax(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 2 {
            return shape_err("softmax", format!("input {s:?}"));
        }
        let out = softmax_rows(self.value(x).data(), s[1]);
        let value = Tensor::new(s, out)?;
        Ok(self.push(value, Op::Softmax(x), &[x]))
    }

    /// Mean cross-entropy of softmax(logits) against class indices.
    pub fn softmax_cross_entropy(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let s = self.value(logits).shape().to_vec();
        if s.len() != 2 || s[0] != targets.len() || targets.iter().any(|&t| t >= s[1]) {
            return shape_err("softmax_cross_entropy", format!("logits {s:?}, {} targets", targets.len()));
        }
        let k = s[1];
        let probs = softmax_rows(self.value(logits).data(), k);
        let loss = targets
            .iter()
            .enumerate()
            .map(|(bi, &t)| -probs[bi * k + t].max(f64::MIN_POSITIVE).ln())
            .sum::<f64>()
            / targets.len() as f64;
        Ok(self.push(
            Tensor::scalar(loss),
            Op::SoftmaxCrossEntropy {
                logits,
                targets: targets.to_vec(),
                probs,
            },
            &[logits],
        ))
    }

    /// One LSTM direction over `x[B, T, D]` with gate order `[i, f, g, o]`;
    /// returns hidden states `[B, T, H]` at their original time positions.
    pub fn lstm(&mut self, x: NodeId, w_ih: NodeId, w_hh: NodeId, b: NodeId, reverse: bool) -> Result<NodeId> {
        let xs = self.value(x).shape().to_vec();
        let ws = self.value(w_ih).shape().to_vec();
        let hs = self.value(w_hh).shape().to_vec();
        if xs.len() != 3 || xs[1] == 0 || ws.len() != 2 || hs.len() != 2 || ws[1] != xs[2] {
            return shape_err("lstm", format!("x {xs:?}, w_ih {ws:?}, w_hh {hs:?}"));
        }
        let (batch, steps, din) = (xs[0], xs[1], xs[2]);
        let h = hs[1];
        if ws[0] != 4 * h || hs[0] != 4 * h || self.value(b).shape() != [4 * h] {
            return shape_err("lstm", "gate dimensions");
        }
        let xv = self.value(x).data();
        let wi = self.value(w_ih).data();
        let wh = self.value(w_hh).data();
        let bv = self.value(b).data();
        let mut gates = vec![0.0; batch * steps * 4 * h];
        let mut cell = vec![0.0; batch * steps * h];
        let mut hidden = vec![0.0; batch * steps * h];
        let mut z = vec![0.0; 4 * h];
        let zero = vec![0.0; h];
        for bi in 0..batch {
            let mut prev: Option<usize> = None;
            for step in 0..steps {
                let t = if reverse { steps - 1 - step } else { step };
                let xt = &xv[(bi * steps + t) * din..(bi * steps + t + 1) * din];
                let (h_prev, c_prev) = match prev {
                    Some(p) => (
                        hidden[(bi * steps + p) * h..(bi * steps + p + 1) * h].to_vec(),
                        cell[(bi * steps + p) * h..(bi * steps + p + 1) * h].to_vec(),
                    ),
                    None => (zero.clone(), zero.clone()),
                };
                for (r, zr) in z.iter_mut().enumerate() {
                    *zr = bv[r] + dot(&wi[r * din..(r + 1) * din], xt) + dot(&wh[r * h..(r + 1) * h], &h_prev);
                }
                let gbase = (bi * steps + t) * 4 * h;
                let sbase = (bi * steps + t) * h;
                for j in 0..h {
                    let ig = sigmoid(z[j]);
                    let fg = sigmoid(z[h + j]);
                    let gg = z[2 * h + j].tanh();
                    let og = sigmoid(z[3 * h + j]);
                    gates[gbase + j] = ig;
                    gates[gbase + h + j] = fg;
                    gates[gbase + 2 * h + j] = gg;
                    gates[gbase + 3 * h + j] = og;
                    let c = fg * c_prev[j] + ig * gg;
                    cell[sbase + j] = c;
                    hidden[sbase + j] = og * c.tanh();
                }
                prev = Some(t);
            }
        }
        let value = Tensor::new(vec![batch, steps, h], hidden.clone())?;
        Ok(self.push(
            value,
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                b,
                reverse,
                cache: LstmCache { gates, cell, hidden },
            },
            &[x, w_ih, w_hh, b],
        ))
    }

    /// `[B, T, H] -> [B, H]` at time index `t`.
    pub fn time_step(&mut self, x: NodeId, t: usize) -> Result<NodeId> {
        let s = self.value(x).shape().to_vec();
        if s.len() != 3 || t >= s[1] {
            return shape_err("time_step", format!("input {s:?}, t {t}"));
        }
        let (b, steps, h) = (s[0], s[1], s[2]);
        let xv = self.value(x).data();
        let mut out = Vec::with_capacity(b * h);
        for bi in 0..b {
            out.extend_from_slice(&xv[(bi * steps + t) * h..(bi * steps + t + 1) * h]);
        }
        let value = Tensor::new(vec![b, h], out)?;
        Ok(self.push(value, Op::TimeStep { x, t }, &[x]))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let s = self.value(x).data().iter().sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    /// `sum(weights * x)` with constant weights.
    pub fn weighted_sum(&mut self, x: NodeId, weights: &[f64]) -> Result<NodeId> {
        if weights.len() != self.value(x).len() {
            return shape_err("weighted_sum", "weight count");
        }
        let s = dot(self.value(x).data(), weights);
        Ok(self.push(
            Tensor::scalar(s),
            Op::WeightedSum {
                x,
                weights: weights.to_vec(),
            },
            &[x],
        ))
    }

    // ----------------------------------------------------------- backward

    /// Reverse sweep from a scalar node. Gradients accumulate into every node
    /// that (transitively) depends on a parameter or a gradient-tracked input.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.nodes.is_empty() || loss.0 >= self.nodes.len() {
            return Err(NnError::NoForward);
        }
        if self.nodes[loss.0].value.len() != 1 {
            return shape_err("backward", "loss must be a scalar");
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        self.nodes[loss.0].grad = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = self.nodes[i].grad.take() else {
                continue;
            };
            if self.nodes[i].requires_grad {
                let contribs = self.local_grads(i, &g);
                for (id, d) in contribs {
                    let node = &mut self.nodes[id.0];
                    if !node.requires_grad {
                        continue;
                    }
                    match &mut node.grad {
                        Some(acc) => acc.iter_mut().zip(&d).for_each(|(a, v)| *a += v),
                        None => node.grad = Some(d),
                    }
                }
            }
            self.nodes[i].grad = Some(g);
        }
        self.backward_done = true;
        Ok(())
    }

    /// Adds parameter-node gradients into the matching [`ParamSet`] slots.
    pub fn accumulate_param_grads(&self, params: &mut ParamSet) -> Result<()> {
        if !self.backward_done {
            return Err(NnError::NoForward);
        }
        for n in &self.nodes {
            if let (Some(pid), Some(g)) = (n.param, &n.grad) {
                let e = &mut params.entries_mut()[pid.0];
                e.grad.iter_mut().zip(g).for_each(|(a, v)| *a += v);
            }
        }
        Ok(())
    }

    fn wants(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    fn local_grads(&self, i: usize, g: &[f64]) -> Vec<(NodeId, Vec<f64>)> {
        let node = &self.nodes[i];
        let out = &node.value;
        match &node.op {
            Op::Leaf => vec![],
            Op::Conv1d { x, w, b, opts } => self.conv1d_backward(*x, *w, *b, opts, out.shape(), g),
            Op::Dense { x, w, b } => {
                let xv = self.value(*x);
                let wv = self.value(*w).data();
                let (batch, din) = (xv.dim(0), xv.dim(1));
                let dout = out.dim(1);
                let mut dx = vec![0.0; batch * din];
                let mut dw = vec![0.0; dout * din];
                let mut db = vec![0.0; dout];
                let want_x = self.wants(*x);
                for bi in 0..batch {
                    let xr = &xv.data()[bi * din..(bi + 1) * din];
                    for o in 0..dout {
                        let gv = g[bi * dout + o];
                        if gv == 0.0 {
                            continue;
                        }
                        db[o] += gv;
                        axpy(gv, xr, &mut dw[o * din..(o + 1) * din]);
                        if want_x {
                            axpy(gv, &wv[o * din..(o + 1) * din], &mut dx[bi * din..(bi + 1) * din]);
                        }
                    }
                }
                let mut v = vec![(*x, dx), (*w, dw)];
                if let Some(b) = b {
                    v.push((*b, db));
                }
                v
            }
            Op::BatchNorm {
                x,
                gamma,
                beta,
                xhat,
                inv_std,
                batch_stats,
            } => {
                let s = out.shape();
                let (batch, chans) = (s[0], s[1]);
                let len = if s.len() == 3 { s[2] } else { 1 };
                let n = (batch * len) as f64;
                let gam = self.value(*gamma).data();
                let mut dgamma = vec![0.0; chans];
                let mut dbeta = vec![0.0; chans];
                for bi in 0..batch {
                    for c in 0..chans {
                        let base = (bi * chans + c) * len;
                        for k in base..base + len {
                            dgamma[c] += g[k] * xhat[k];
                            dbeta[c] += g[k];
                        }
                    }
                }
                let mut dx = vec![0.0; g.len()];
                for bi in 0..batch {
                    for c in 0..chans {
                        let base = (bi * chans + c) * len;
                        for k in base..base + len {
                            dx[k] = if *batch_stats {
                                gam[c] * inv_std[c] / n * (n * g[k] - dbeta[c] - xhat[k] * dgamma[c])
                            } else {
                                g[k] * gam[c] * inv_std[c]
                            };
                        }
                    }
                }
                vec![(*x, dx), (*gamma, dgamma), (*beta, dbeta)]
            }
            Op::Relu(x) => {
                let xv = self.value(*x).data();
                vec![(*x, g.iter().zip(xv).map(|(gv, &t)| if t > 0.0 { *gv } else { 0.0 }).collect())]
            }
            Op::Sigmoid(x) => vec![(*x, g.iter().zip(out.data()).map(|(gv, y)| gv * y * (1.0 - y)).collect())],
            Op::Tanh(x) => vec![(*x, g.iter().zip(out.data()).map(|(gv, y)| gv * (1.0 - y * y)).collect())],
            Op::MaxPool { x, argmax } | Op::Max { x, argmax } => {
                let mut dx = vec![0.0; self.value(*x).len()];
                for (gv, &src) in g.iter().zip(argmax) {
                    dx[src] += gv;
                }
                vec![(*x, dx)]
            }
            Op::Dropout { x, mask } => vec![(*x, g.iter().zip(mask).map(|(a, m)| a * m).collect())],
            Op::Reshape(x) => vec![(*x, g.to_vec())],
            Op::Concat(inputs) => {
                let batch = out.dim(0);
                let inner: usize = out.shape()[2..].iter().product();
                let total = out.dim(1);
                let mut offset = 0;
                let mut v = Vec::with_capacity(inputs.len());
                for &id in inputs {
                    let w = self.value(id).dim(1);
                    let mut d = Vec::with_capacity(batch * w * inner);
                    for bi in 0..batch {
                        let start = (bi * total + offset) * inner;
                        d.extend_from_slice(&g[start..start + w * inner]);
                    }
                    offset += w;
                    v.push((id, d));
                }
                v
            }
            Op::Transpose12(x) => {
                let s = self.value(*x).shape();
                let (b, c, l) = (s[0], s[1], s[2]);
                let mut dx = vec![0.0; g.len()];
                for bi in 0..b {
                    for ci in 0..c {
                        for li in 0..l {
                            dx[(bi * c + ci) * l + li] = g[(bi * l + li) * c + ci];
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::Add(a, b) => vec![(*a, g.to_vec()), (*b, g.to_vec())],
            Op::Mul(a, b) => {
                let (va, vb) = (self.value(*a).data(), self.value(*b).data());
                vec![
                    (*a, g.iter().zip(vb).map(|(x, y)| x * y).collect()),
                    (*b, g.iter().zip(va).map(|(x, y)| x * y).collect()),
                ]
            }
            Op::BroadcastMul { x, m } => {
                let s = self.value(*x).shape();
                let (b, c, l) = (s[0], s[1], s[2]);
                let xv = self.value(*x).data();
                let mv = self.value(*m).data();
                let per_channel = self.value(*m).dim(1) == c && self.value(*m).dim(2) == 1;
                let mut dx = vec![0.0; xv.len()];
                let mut dm = vec![0.0; mv.len()];
                for bi in 0..b {
                    for ci in 0..c {
                        for li in 0..l {
                            let k = (bi * c + ci) * l + li;
                            let mi = if per_channel { bi * c + ci } else { bi * l + li };
                            dx[k] = g[k] * mv[mi];
                            dm[mi] += g[k] * xv[k];
                        }
                    }
                }
                vec![(*x, dx), (*m, dm)]
            }
            Op::Mean { x, axis } => {
                let s = self.value(*x).shape();
                let (b, c, l) = (s[0], s[1], s[2]);
                let mut dx = vec![0.0; b * c * l];
                for bi in 0..b {
                    for ci in 0..c {
                        for li in 0..l {
                            dx[(bi * c + ci) * l + li] = if *axis == 2 {
                                g[bi * c + ci] / l as f64
                            } else {
                                g[bi * l + li] / c as f64
                            };
                        }
                    }
                }
                vec![(*x, dx)]
            }
            Op::GlobalAvgPool(x) => {
                let l = self.value(*x).dim(2);
                let mut dx = Vec::with_capacity(g.len() * l);
                for gv in g {
                    dx.extend(std::iter::repeat(gv / l as f64).take(l));
                }
                vec![(*x, dx)]
            }
            Op::Softmax(x) => {
                let k = out.dim(1);
                let y = out.data();
                let mut dx = vec![0.0; g.len()];
                for r in 0..out.dim(0) {
                    let row = r * k..(r + 1) * k;
                    let s: f64 = g[row.clone()].iter().zip(&y[row.clone()]).map(|(a, b)| a * b).sum();
                    for j in row {
                        dx[j] = y[j] * (g[j] - s);
                    }
                }
                vec![(*x, dx)]
            }
            Op::SoftmaxCrossEntropy { logits, targets, probs } => {
                let k = probs.len() / targets.len();
                let scale = g[0] / targets.len() as f64;
                let mut d: Vec<f64> = probs.iter().map(|p| p * scale).collect();
                for (bi, &t) in targets.iter().enumerate() {
                    d[bi * k + t] -= scale;
                }
                vec![(*logits, d)]
            }
            Op::Lstm {
                x,
                w_ih,
                w_hh,
                b,
                reverse,
                cache,
            } => self.lstm_backward(*x, *w_ih, *w_hh, *b, *reverse, cache, g),
            Op::TimeStep { x, t } => {
                let s = self.value(*x).shape();
                let (b, steps, h) = (s[0], s[1], s[2]);
                let mut dx = vec![0.0; b * steps * h];
                for bi in 0..b {
                    dx[(bi * steps + t) * h..(bi * steps + t + 1) * h].copy_from_slice(&g[bi * h..(bi + 1) * h]);
                }
                vec![(*x, dx)]
            }
            Op::Sum(x) => vec![(*x, vec![g[0]; self.value(*x).len()])],
            Op::WeightedSum { x, weights } => vec![(*x, weights.iter().map(|w| w * g[0]).collect())],
        }
    }

    fn conv1d_backward(
        &self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        opts: &Conv1dOpts,
        out_shape: &[usize],
        g: &[f64],
    ) -> Vec<(NodeId, Vec<f64>)> {
        let xt = self.value(x);
        let (batch, chans, len) = (xt.dim(0), xt.dim(1), xt.dim(2));
        let wt = self.value(w);
        let (out_ch, kernel) = (wt.dim(0), wt.dim(2));
        let out_len = out_shape[2];
        let padded = len + opts.pad_left + opts.pad_right;
        let wv = wt.data();
        let want_x = self.wants(x);
        let mut dw = vec![0.0; wv.len()];
        let mut db = vec![0.0; out_ch];
        let mut dx = vec![0.0; xt.len()];
        let mut xp = vec![0.0; chans * padded];
        let mut dxp = vec![0.0; chans * padded];
        for bi in 0..batch {
            fill_padded(&xt.data()[bi * chans * len..(bi + 1) * chans * len], chans, len, opts, &mut xp);
            dxp.iter_mut().for_each(|v| *v = 0.0);
            for k in 0..out_ch {
                let grow = &g[(bi * out_ch + k) * out_len..(bi * out_ch + k + 1) * out_len];
                db[k] += grow.iter().sum::<f64>();
                for c in 0..chans {
                    let wrow = &wv[(k * chans + c) * kernel..(k * chans + c + 1) * kernel];
                    let dwrow = &mut dw[(k * chans + c) * kernel..(k * chans + c + 1) * kernel];
                    for (l, &gv) in grow.iter().enumerate() {
                        if gv == 0.0 {
                            continue;
                        }
                        let start = c * padded + l * opts.stride;
                        axpy(gv, &xp[start..start + kernel], dwrow);
                        if want_x {
                            axpy(gv, wrow, &mut dxp[start..start + kernel]);
                        }
                    }
                }
            }
            if want_x {
                let dxb = &mut dx[bi * chans * len..(bi + 1) * chans * len];
                for c in 0..chans {
                    for p in 0..padded {
                        let v = dxp[c * padded + p];
                        if let Some(src) = padded_source(p, len, opts) {
                            dxb[c * len + src] += v;
                        }
                    }
                }
            }
        }
        let mut v = vec![(x, dx), (w, dw)];
        if let Some(b) = b {
            v.push((b, db));
        }
        v
    }

    #[allow(clippy::too_many_arguments)]
    fn lstm_backward(
        &self,
        x: NodeId,
        w_ih: NodeId,
        w_hh: NodeId,
        b: NodeId,
        reverse: bool,
        cache: &LstmCache,
        g: &[f64],
    ) -> Vec<(NodeId, Vec<f64>)> {
        let xt = self.value(x);
        let (batch, steps, din) = (xt.dim(0), xt.dim(1), xt.dim(2));
        let h = self.value(w_hh).dim(1);
        let xv = xt.data();
        let wi = self.value(w_ih).data();
        let wh = self.value(w_hh).data();
        let mut dx = vec![0.0; xv.len()];
        let mut dwi = vec![0.0; wi.len()];
        let mut dwh = vec![0.0; wh.len()];
        let mut db = vec![0.0; 4 * h];
        let mut dz = vec![0.0; 4 * h];
        let zero = vec![0.0; h];
        for bi in 0..batch {
            let order: Vec<usize> = if reverse { (0..steps).rev().collect() } else { (0..steps).collect() };
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for pos in (0..steps).rev() {
                let t = order[pos];
                let prev = if pos > 0 { Some(order[pos - 1]) } else { None };
                let sbase = (bi * steps + t) * h;
                let gbase = (bi * steps + t) * 4 * h;
                let (h_prev, c_prev) = match prev {
                    Some(p) => (
                        &cache.hidden[(bi * steps + p) * h..(bi * steps + p + 1) * h],
                        &cache.cell[(bi * steps + p) * h..(bi * steps + p + 1) * h],
                    ),
                    None => (&zero[..], &zero[..]),
                };
                for j in 0..h {
                    let ig = cache.gates[gbase + j];
                    let fg = cache.gates[gbase + h + j];
                    let gg = cache.gates[gbase + 2 * h + j];
                    let og = cache.gates[gbase + 3 * h + j];
                    let tc = cache.cell[sbase + j].tanh();
                    let dh = g[sbase + j] + dh_next[j];
                    let dc = dh * og * (1.0 - tc * tc) + dc_next[j];
                    dz[j] = dc * gg * ig * (1.0 - ig);
                    dz[h + j] = dc * c_prev[j] * fg * (1.0 - fg);
                    dz[2 * h + j] = dc * ig * (1.0 - gg * gg);
                    dz[3 * h + j] = dh * tc * og * (1.0 - og);
                    dc_next[j] = dc * fg;
                }
                let xrow = &xv[(bi * steps + t) * din..(bi * steps + t + 1) * din];
                let dxrow = &mut dx[(bi * steps + t) * din..(bi * steps + t + 1) * din];
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                for (r, &d) in dz.iter().enumerate() {
                    if d == 0.0 {
                        continue;
                    }
                    db[r] += d;
                    axpy(d, xrow, &mut dwi[r * din..(r + 1) * din]);
                    axpy(d, &wi[r * din..(r + 1) * din], dxrow);
                    axpy(d, h_prev, &mut dwh[r * h..(r + 1) * h]);
                    axpy(d, &wh[r * h..(r + 1) * h], &mut dh_next);
                }
            }
        }
        vec![(x, dx), (w_ih, dwi), (w_hh, dwh), (b, db)]
    }
}

pub fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}

fn softmax_rows(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for (row, orow) in x.chunks(k).zip(out.chunks_mut(k)) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut s = 0.0;
        for (o, &v) in orow.iter_mut().zip(row) {
            *o = (v - m).exp();
            s += *o;
        }
        orow.iter_mut().for_each(|o| *o /= s);
    }
    out
}

/// Index into the unpadded row that padded position `p` reads from.
fn padded_source(p: usize, len: usize, opts: &Conv1dOpts) -> Option<usize> {
    let shifted = p as isize - opts.pad_left as isize;
    if (0..len as isize).contains(&shifted) {
        return Some(shifted as usize);
    }
    match opts.pad_mode {
        PadMode::Zeros => None,
        PadMode::Circular => Some(shifted.rem_euclid(len as isize) as usize),
    }
}

fn fill_padded(x: &[f64], chans: usize, len: usize, opts: &Conv1dOpts, xp: &mut [f64]) {
    let padded = len + opts.pad_left + opts.pad_right;
    for c in 0..chans {
        let row = &x[c * len..(c + 1) * len];
        let prow = &mut xp[c * padded..(c + 1) * padded];
        for (p, v) in prow.iter_mut().enumerate() {
            *v = padded_source(p, len, opts).map_or(0.0, |s| row[s]);
        }
    }
}
