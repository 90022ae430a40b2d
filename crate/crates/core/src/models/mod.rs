//! The five classifiers: two-branch CNN, CNN-LSTM, their CBAM variants, and
//! the single-layer heuristic 1D-CNN.

mod table;

use std::fmt;
use std::str::FromStr;

use eegart_nn::layers::{BatchNorm1d, BiLstm, Conv1d, Dense};
use eegart_nn::{mix_seed, Conv1dOpts, Graph, Mode, Network, NodeId, PadMode, ParamId, ParamSet, Tensor, WeightFile};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attention::{activation_attention_map, AttentionMap, Cbam, ATTENTION_POWER, DEFAULT_REDUCTION, EDGE_EXCLUSION_S};
use crate::error::{CoreError, Result};
use crate::signal::{EPOCH_LEN, EPOCH_S};

pub use table::{layer_table_markdown, LayerRow};

pub const CLEAN_CLASS: usize = 0;
pub const ARTIFACT_CLASS: usize = 1;
pub const DROPOUT: f64 = 0.5;

/// Parameter groups of the heuristic 1D-CNN's two training phases.
pub const CONV_GROUP: &str = "conv";
pub const DENSE_GROUP: &str = "dense";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Cnn,
    CnnLstm,
    CnnCbam,
    CnnCbamLstm,
    #[serde(rename = "heuristic_1dcnn")]
    Heuristic1dCnn,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] = [
        ModelKind::Cnn,
        ModelKind::CnnLstm,
        ModelKind::CnnCbam,
        ModelKind::CnnCbamLstm,
        ModelKind::Heuristic1dCnn,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Cnn => "cnn",
            ModelKind::CnnLstm => "cnn_lstm",
            ModelKind::CnnCbam => "cnn_cbam",
            ModelKind::CnnCbamLstm => "cnn_cbam_lstm",
            ModelKind::Heuristic1dCnn => "heuristic_1dcnn",
        }
    }

    pub fn has_cbam(self) -> bool {
        matches!(self, ModelKind::CnnCbam | ModelKind::CnnCbamLstm)
    }

    pub fn has_lstm(self) -> bool {
        matches!(self, ModelKind::CnnLstm | ModelKind::CnnCbamLstm)
    }

    /// Conv layers per branch of the two-branch models.
    pub fn convs_per_branch(self) -> usize {
        if self.has_lstm() {
            4
        } else {
            5
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| CoreError::InvalidArgument(format!("unknown model kind `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Channel counts divided by four.
    Toy,
    Full,
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Toy => "toy",
            Profile::Full => "full",
        }
    }

    pub fn arch(self) -> ArchConfig {
        let div = match self {
            Profile::Toy => 4,
            Profile::Full => 1,
        };
        ArchConfig {
            first_filters: 64 / div,
            filters: 128 / div,
            lstm_units: 128 / div,
            heuristic_filters: 16 / div,
            heuristic_kernel: 32,
            heuristic_hidden: 8,
            reduction: DEFAULT_REDUCTION,
        }
    }
}

impl FromStr for Profile {
    type Err = CoreError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "toy" => Ok(Profile::Toy),
            "full" => Ok(Profile::Full),
            _ => Err(CoreError::InvalidArgument(format!("unknown profile `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArchConfig {
    pub first_filters: usize,
    pub filters: usize,
    pub lstm_units: usize,
    pub heuristic_filters: usize,
    pub heuristic_kernel: usize,
    pub heuristic_hidden: usize,
    pub reduction: usize,
}

/// Kernel/stride/pool layout of one branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BranchLayout {
    pub name: &'static str,
    pub first_kernel: usize,
    pub first_stride: usize,
    pub first_pool: usize,
    pub kernel: usize,
    pub last_pool: usize,
}

/// fs/2 = 64-sample kernel at 128 Hz.
pub const TEMPORAL: BranchLayout = BranchLayout {
    name: "temporal",
    first_kernel: 64,
    first_stride: 8,
    first_pool: 8,
    kernel: 8,
    last_pool: 4,
};

/// fs*4 = 512-sample kernel at 128 Hz.
pub const FREQUENCY: BranchLayout = BranchLayout {
    name: "frequency",
    first_kernel: 512,
    first_stride: 64,
    first_pool: 4,
    kernel: 6,
    last_pool: 2,
};

// Independent RNG streams so that shared submodules of different kinds
// start from identical weights under one seed.
const STREAM_TEMPORAL: u64 = 1;
const STREAM_FREQUENCY: u64 = 2;
const STREAM_CBAM: u64 = 3;
const STREAM_LSTM: u64 = 4;
const STREAM_SHORTCUT: u64 = 5;
const STREAM_HEAD: u64 = 6;
const STREAM_HEURISTIC: u64 = 7;

fn layer_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix_seed(seed, stream, index))
}

#[derive(Debug, Clone)]
struct ConvBlock {
    conv: Conv1d,
    bn: BatchNorm1d,
    cbam: Option<Cbam>,
    out_len: usize,
}

impl ConvBlock {
    /// Conv, optional CBAM, batch norm, ReLU. Also returns the CBAM output.
    fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> eegart_nn::Result<(NodeId, Option<NodeId>)> {
        let mut h = self.conv.forward(g, ps, x)?;
        let mut attended = None;
        if let Some(c) = &self.cbam {
            h = c.forward(g, ps, h)?;
            attended = Some(h);
        }
        let h = self.bn.forward(g, ps, h)?;
        Ok((g.relu(h), attended))
    }
}

#[derive(Debug, Clone)]
struct Branch {
    layout: BranchLayout,
    blocks: Vec<ConvBlock>,
    channels: usize,
    /// Length after the final pool.
    out_len: usize,
}

impl Branch {
    #[allow(clippy::too_many_arguments)]
    fn new(
        ps: &mut ParamSet,
        layout: BranchLayout,
        stream: u64,
        n_convs: usize,
        arch: &ArchConfig,
        cbam: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut blocks = Vec::with_capacity(n_convs);
        let mut len = EPOCH_LEN;
        let mut in_ch = 1;
        for i in 0..n_convs {
            let (kernel, stride, out_ch) = if i == 0 {
                (layout.first_kernel, layout.first_stride, arch.first_filters)
            } else {
                (layout.kernel, 1, arch.filters)
            };
            let opts = Conv1dOpts::same(len, kernel, stride);
            let out_len = opts
                .out_len(len, kernel)
                .ok_or_else(|| CoreError::InvalidArgument(format!("{} conv {i} does not fit", layout.name)))?;
            let name = format!("{}.conv{}", layout.name, i + 1);
            let mut rng = layer_rng(seed, stream, i as u64);
            let conv = Conv1d::new(ps, &name, layout.name, in_ch, out_ch, kernel, opts, &mut rng);
            let bn = BatchNorm1d::new(ps, &format!("{}.bn{}", layout.name, i + 1), layout.name, out_ch);
            let cbam = cbam.then(|| {
                let mut rng = layer_rng(seed, STREAM_CBAM, i as u64);
                Cbam::new(ps, &format!("{}.cbam{}", layout.name, i + 1), "attention", out_ch, arch.reduction, &mut rng)
            });
            blocks.push(ConvBlock {
                conv,
                bn,
                cbam,
                out_len,
            });
            len = if i == 0 { out_len / layout.first_pool } else { out_len };
            in_ch = out_ch;
        }
        Ok(Self {
            layout,
            blocks,
            channels: in_ch,
            out_len: len / layout.last_pool,
        })
    }

    /// Returns the branch output and the last CBAM output, if any.
    fn forward(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> eegart_nn::Result<(NodeId, Option<NodeId>)> {
        let mut h = x;
        let mut captured = None;
        for (i, b) in self.blocks.iter().enumerate() {
            let (out, attended) = b.forward(g, ps, h)?;
            h = out;
            if attended.is_some() {
                captured = attended;
            }
            if i == 0 {
                h = g.max_pool(h, self.layout.first_pool)?;
                h = g.dropout(h, DROPOUT)?;
            }
        }
        h = g.max_pool(h, self.layout.last_pool)?;
        h = g.dropout(h, DROPOUT)?;
        Ok((h, captured))
    }

    fn flat_len(&self) -> usize {
        self.channels * self.out_len
    }
}

#[derive(Debug, Clone)]
struct TwoBranch {
    temporal: Branch,
    frequency: Branch,
    lstm: Option<(BiLstm, Dense)>,
    head: Dense,
}

#[derive(Debug, Clone)]
struct Heuristic {
    conv: Conv1d,
    bn: BatchNorm1d,
    fc1: Dense,
    fc2: Dense,
}

#[derive(Debug, Clone)]
enum Body {
    TwoBranch(TwoBranch),
    Heuristic(Heuristic),
}

/// Graph nodes of one forward pass.
#[derive(Debug, Clone, Copy)]
pub struct ForwardNodes {
    pub logits: NodeId,
    /// Output of the last temporal-branch CBAM.
    pub attention: Option<NodeId>,
    pub temporal: Option<NodeId>,
    pub frequency: Option<NodeId>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub kind: ModelKind,
    pub profile: Profile,
    pub seed: u64,
    params: ParamSet,
    body: Body,
}

/// Per-epoch inference output.
#[derive(Debug, Clone, PartialEq)]
pub struct Inference {
    pub artifact_prob: f64,
    pub attention: Option<AttentionMap>,
}

impl Model {
    pub fn build(kind: ModelKind, profile: Profile, seed: u64) -> Result<Self> {
        let arch = profile.arch();
        let mut ps = ParamSet::new();
        let body = if kind == ModelKind::Heuristic1dCnn {
            let mut rng = layer_rng(seed, STREAM_HEURISTIC, 0);
            let opts = Conv1dOpts::same(EPOCH_LEN, arch.heuristic_kernel, 1).with_mode(PadMode::Circular);
            let f = arch.heuristic_filters;
            let conv = Conv1d::new(&mut ps, "conv", CONV_GROUP, 1, f, arch.heuristic_kernel, opts, &mut rng);
            let bn = BatchNorm1d::new(&mut ps, "bn", CONV_GROUP, f);
            let fc1 = Dense::new(&mut ps, "fc1", DENSE_GROUP, f, arch.heuristic_hidden, &mut rng);
            let fc2 = Dense::new(&mut ps, "fc2", DENSE_GROUP, arch.heuristic_hidden, 2, &mut rng);
            Body::Heuristic(Heuristic { conv, bn, fc1, fc2 })
        } else {
            let n = kind.convs_per_branch();
            let temporal = Branch::new(&mut ps, TEMPORAL, STREAM_TEMPORAL, n, &arch, kind.has_cbam(), seed)?;
            let frequency = Branch::new(&mut ps, FREQUENCY, STREAM_FREQUENCY, n, &arch, false, seed)?;
            let flat = temporal.flat_len() + frequency.flat_len();
            let (lstm, head_in) = if kind.has_lstm() {
                if temporal.channels != frequency.channels {
                    return Err(CoreError::InvalidArgument("branch channel counts differ".into()));
                }
                let h = arch.lstm_units;
                let lstm = BiLstm::new(&mut ps, "lstm", "recurrent", temporal.channels, h, &mut layer_rng(seed, STREAM_LSTM, 0));
                let shortcut = Dense::new(&mut ps, "shortcut", "head", flat, 2 * h, &mut layer_rng(seed, STREAM_SHORTCUT, 0));
                (Some((lstm, shortcut)), 2 * h)
            } else {
                (None, flat)
            };
            let head = Dense::new(&mut ps, "head", "head", head_in, 2, &mut layer_rng(seed, STREAM_HEAD, 0));
            Body::TwoBranch(TwoBranch {
                temporal,
                frequency,
                lstm,
                head,
            })
        };
        Ok(Self {
            kind,
            profile,
            seed,
            params: ps,
            body,
        })
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn cbam_blocks(&self) -> Vec<&Cbam> {
        match &self.body {
            Body::TwoBranch(t) => t
                .temporal
                .blocks
                .iter()
                .chain(&t.frequency.blocks)
                .filter_map(|b| b.cbam.as_ref())
                .collect(),
            Body::Heuristic(_) => Vec::new(),
        }
    }

    /// Conv biases that go straight into batch norm. Under batch statistics
    /// their gradient is exactly zero.
    pub fn biases_into_batch_norm(&self) -> Vec<ParamId> {
        match &self.body {
            Body::TwoBranch(t) => t
                .temporal
                .blocks
                .iter()
                .chain(&t.frequency.blocks)
                .filter(|b| b.cbam.is_none())
                .map(|b| b.conv.bias)
                .collect(),
            Body::Heuristic(h) => vec![h.conv.bias],
        }
    }

    /// `(channels, steps)` of the attention feature map.
    pub fn attention_shape(&self) -> Option<(usize, usize)> {
        match &self.body {
            Body::TwoBranch(t) if self.kind.has_cbam() => {
                let last = t.temporal.blocks.last()?;
                Some((last.conv.out_channels, last.out_len))
            }
            _ => None,
        }
    }

    pub fn attention_time_scale(&self) -> Option<f64> {
        self.attention_shape().map(|(_, l)| EPOCH_S / l as f64)
    }

    pub fn forward_nodes(&self, g: &mut Graph, x: NodeId) -> eegart_nn::Result<ForwardNodes> {
        self.forward_with(&self.params, g, x)
    }

    /// Forward pass reading parameters from `ps`, which must have this
    /// model's layout (e.g. a perturbed copy of [`Model::params`]).
    pub fn forward_with(&self, ps: &ParamSet, g: &mut Graph, x: NodeId) -> eegart_nn::Result<ForwardNodes> {
        let s = g.value(x).shape().to_vec();
        if s.len() != 3 || s[1] != 1 || s[2] != EPOCH_LEN {
            return Err(eegart_nn::NnError::Shape {
                op: "model input",
                detail: format!("expected [B, 1, {EPOCH_LEN}], got {s:?}"),
            });
        }
        match &self.body {
            Body::Heuristic(h) => {
                let y = h.conv.forward(g, ps, x)?;
                let y = h.bn.forward(g, ps, y)?;
                let y = g.relu(y);
                let y = g.global_avg_pool(y)?;
                let y = h.fc1.forward(g, ps, y)?;
                let y = g.relu(y);
                let logits = h.fc2.forward(g, ps, y)?;
                Ok(ForwardNodes {
                    logits,
                    attention: None,
                    temporal: None,
                    frequency: None,
                })
            }
            Body::TwoBranch(t) => {
                let (tf, attention) = t.temporal.forward(g, ps, x)?;
                let (ff, _) = t.frequency.forward(g, ps, x)?;
                let tflat = g.flatten(tf)?;
                let fflat = g.flatten(ff)?;
                let flat = g.concat(&[tflat, fflat])?;
                let feats = match &t.lstm {
                    None => flat,
                    Some((lstm, shortcut)) => {
                        let ts = g.transpose12(tf)?;
                        let fs = g.transpose12(ff)?;
                        let seq = g.concat(&[ts, fs])?;
                        let summary = lstm.forward_summary(g, ps, seq)?;
                        let sc = shortcut.forward(g, ps, flat)?;
                        g.add(summary, sc)?
                    }
                };
                let logits = t.head.forward(g, ps, feats)?;
                Ok(ForwardNodes {
                    logits,
                    attention,
                    temporal: Some(tf),
                    frequency: Some(ff),
                })
            }
        }
    }

    /// Artifact probabilities and, for CBAM kinds, attention maps. Epoch
    /// indices of the maps start at `first_index`.
    pub fn infer(&self, inputs: &[&[f64]], first_index: usize) -> Result<Vec<Inference>> {
        let mut out = Vec::with_capacity(inputs.len());
        for (c, chunk) in inputs.chunks(64).enumerate() {
            let mut g = Graph::new(Mode::Eval, 0);
            let x = g.input(Tensor::stack(chunk, &[1, EPOCH_LEN])?);
            let nodes = self.forward_nodes(&mut g, x)?;
            let probs = g.softmax(nodes.logits)?;
            let pv = g.value(probs).data().to_vec();
            for i in 0..chunk.len() {
                let attention = match (nodes.attention, self.attention_shape()) {
                    (Some(a), Some((ch, len))) => {
                        let av = g.value(a).data();
                        let one = &av[i * ch * len..(i + 1) * ch * len];
                        let idx = first_index + c * 64 + i;
                        Some(activation_attention_map(one, ch, ATTENTION_POWER, idx, EPOCH_S / len as f64, EDGE_EXCLUSION_S)?)
                    }
                    _ => None,
                };
                out.push(Inference {
                    artifact_prob: pv[i * 2 + ARTIFACT_CLASS],
                    attention,
                });
            }
        }
        Ok(out)
    }

    pub fn predict_proba(&self, inputs: &[&[f64]]) -> Result<Vec<f64>> {
        Ok(self.infer(inputs, 0)?.into_iter().map(|i| i.artifact_prob).collect())
    }

    pub fn layer_table(&self) -> Vec<LayerRow> {
        table::rows(self)
    }

    pub fn to_weight_file(&self, metadata: serde_json::Value) -> Result<WeightFile> {
        let mut meta = match metadata {
            serde_json::Value::Object(m) => m,
            serde_json::Value::Null => serde_json::Map::new(),
            other => {
                let mut m = serde_json::Map::new();
                m.insert("extra".into(), other);
                m
            }
        };
        meta.insert("profile".into(), self.profile.as_str().into());
        let layers = serde_json::to_value(self.layer_table())?;
        Ok(WeightFile::from_params(
            self.kind.as_str(),
            layers,
            self.seed,
            serde_json::Value::Object(meta),
            &self.params,
        ))
    }

    /// Rebuilds the architecture named in the manifest and loads its tensors.
    pub fn from_weight_file(wf: &WeightFile) -> Result<Self> {
        let kind: ModelKind = wf.manifest.model_kind.parse()?;
        let profile: Profile = wf
            .manifest
            .metadata
            .get("profile")
            .and_then(|p| p.as_str())
            .ok_or_else(|| CoreError::Format("weight manifest lacks metadata.profile".into()))?
            .parse()?;
        let mut model = Self::build(kind, profile, wf.manifest.rng_seed)?;
        wf.load_into(&mut model.params)?;
        Ok(model)
    }
}

impl Network for Model {
    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn logits(&self, g: &mut Graph, x: NodeId) -> eegart_nn::Result<NodeId> {
        Ok(self.forward_nodes(g, x)?.logits)
    }
}

/// Attention map of one epoch; only CBAM kinds have one.
pub fn attention_epoch_map(model: &Model, x: &[f64], epoch_index: usize) -> Result<AttentionMap> {
    if !model.kind.has_cbam() {
        return Err(CoreError::NoAttention(model.kind.to_string()));
    }
    model
        .infer(&[x], epoch_index)?
        .pop()
        .and_then(|i| i.attention)
        .ok_or_else(|| CoreError::NoAttention(model.kind.to_string()))
}
