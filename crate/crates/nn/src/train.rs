//! Mini-batch training with validation-loss early stopping.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::graph::{Graph, Mode, NodeId};
use crate::optim::{Adam, AdamConfig};
use crate::params::{ParamEntry, ParamSet};
use crate::tensor::Tensor;

/// A classifier that maps a batch node to `[B, classes]` logits.
pub trait Network {
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn logits(&self, g: &mut Graph, x: NodeId) -> Result<NodeId>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 128,
            max_epochs: 100,
            patience: 20,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(NnError::Config("batch_size must be at least 1".into()));
        }
        if self.patience > self.max_epochs {
            return Err(NnError::Config(format!(
                "patience {} exceeds max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        Ok(())
    }
}

/// Labeled samples, all of shape `sample_shape`.
#[derive(Debug, Clone, Default)]
pub struct Samples {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sample_shape: Vec<usize>,
}

impl Samples {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, sample_shape: Vec<usize>) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(NnError::Config("input and label counts differ".into()));
        }
        let per: usize = sample_shape.iter().product();
        if inputs.iter().any(|x| x.len() != per) {
            return Err(NnError::Config(format!("every sample must hold {per} values")));
        }
        Ok(Self {
            inputs,
            labels,
            sample_shape,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let rows: Vec<&[f64]> = indices.iter().map(|&i| self.inputs[i].as_slice()).collect();
        let x = Tensor::stack(&rows, &self.sample_shape).expect("validated sample shape");
        (x, indices.iter().map(|&i| self.labels[i]).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// 1-based epoch whose weights were kept.
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

/// Tracks the best loss and counts epochs without improvement.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: f64,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: f64::INFINITY,
            since_best: 0,
        }
    }

    /// Returns `true` when `loss` is a new best (strictly lower).
    pub fn observe(&mut self, loss: f64) -> bool {
        if loss < self.best {
            self.best = loss;
            self.since_best = 0;
            true
        } else {
            self.since_best += 1;
            false
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> f64 {
        self.best
    }
}

/// Anything that can be trained epoch by epoch and rolled back to a snapshot.
pub trait Learner {
    type Snapshot;
    fn train_epoch(&mut self, epoch: usize) -> Result<f64>;
    fn validation_loss(&mut self) -> Result<f64>;
    fn snapshot(&self) -> Self::Snapshot;
    fn restore(&mut self, snapshot: Self::Snapshot);
}

/// Runs up to `max_epochs`, stops after `patience` epochs without a lower
/// validation loss, and leaves the learner at its best snapshot.
pub fn fit<L: Learner>(learner: &mut L, max_epochs: usize, patience: usize) -> Result<History> {
    let mut stopper = EarlyStopping::new(patience);
    let mut history = History::default();
    let mut best = None;
    for epoch in 1..=max_epochs {
        let train_loss = learner.train_epoch(epoch)?;
        let val_loss = learner.validation_loss()?;
        history.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        if stopper.observe(val_loss) {
            best = Some(learner.snapshot());
            history.best_epoch = epoch;
            history.best_val_loss = val_loss;
        }
        if stopper.should_stop() {
            history.stopped_early = epoch < max_epochs;
            break;
        }
    }
    if let Some(s) = best {
        learner.restore(s);
    }
    Ok(history)
}

/// Gradient-descent learner over a [`Network`] and a pair of sample sets.
pub struct SupervisedLearner<'a, N: Network> {
    pub net: &'a mut N,
    train: &'a Samples,
    val: &'a Samples,
    cfg: TrainConfig,
    optimizer: Adam,
}

impl<'a, N: Network> SupervisedLearner<'a, N> {
    pub fn new(net: &'a mut N, train: &'a Samples, val: &'a Samples, cfg: TrainConfig, optimizer: Adam) -> Self {
        Self {
            net,
            train,
            val,
            cfg,
            optimizer,
        }
    }
}

pub fn mix_seed(seed: u64, a: u64, b: u64) -> u64 {
    // splitmix64-style mixing keeps per-batch streams independent
    let mut z = seed ^ a.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ b.wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mean loss of `net` over `data` in eval mode.
pub fn evaluate_loss<N: Network>(net: &N, data: &Samples, batch_size: usize) -> Result<f64> {
    if data.is_empty() {
        return Err(NnError::EmptyData("evaluation set"));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for chunk in idx.chunks(batch_size) {
        let (x, y) = data.batch(chunk);
        let mut g = Graph::new(Mode::Eval, 0);
        let xin = g.input(x);
        let logits = net.logits(&mut g, xin)?;
        let loss = g.softmax_cross_entropy(logits, &y)?;
        total += g.value(loss).data()[0] * chunk.len() as f64;
    }
    Ok(total / data.len() as f64)
}

/// Artifact-class probabilities (`softmax[.., class]`) in eval mode.
pub fn predict_proba<N: Network>(net: &N, inputs: &[Vec<f64>], sample_shape: &[usize], class: usize) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(inputs.len());
    for chunk in inputs.chunks(128) {
        let rows: Vec<&[f64]> = chunk.iter().map(|v| v.as_slice()).collect();
        let mut g = Graph::new(Mode::Eval, 0);
        let xin = g.input(Tensor::stack(&rows, sample_shape)?);
        let logits = net.logits(&mut g, xin)?;
        let p = g.softmax(logits)?;
        let k = g.value(p).dim(1);
        out.extend(g.value(p).data().chunks(k).map(|r| r[class]));
    }
    Ok(out)
}

impl<N: Network> Learner for SupervisedLearner<'_, N> {
    type Snapshot = Vec<Tensor>;

    fn train_epoch(&mut self, epoch: usize) -> Result<f64> {
        let mut order: Vec<usize> = (0..self.train.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(self.cfg.seed, epoch as u64, 0));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for (bi, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let (x, y) = self.train.batch(chunk);
            let mut g = Graph::new(Mode::Train, mix_seed(self.cfg.seed, epoch as u64, bi as u64 + 1));
            let xin = g.input(x);
            let logits = self.net.logits(&mut g, xin)?;
            let loss = g.softmax_cross_entropy(logits, &y)?;
            total += g.value(loss).data()[0] * chunk.len() as f64;
            g.backward(loss)?;
            let ps = self.net.params_mut();
            ps.zero_grad();
            g.accumulate_param_grads(ps)?;
            self.optimizer.step(ps)?;
            for (id, v) in g.take_buffer_updates() {
                ps.get_mut(id).data_mut().copy_from_slice(&v);
            }
        }
        Ok(total / self.train.len() as f64)
    }

    fn validation_loss(&mut self) -> Result<f64> {
        evaluate_loss(&*self.net, self.val, self.cfg.batch_size)
    }

    fn snapshot(&self) -> Vec<Tensor> {
        self.net.params().values()
    }

    fn restore(&mut self, snapshot: Vec<Tensor>) {
        for (e, v) in self.net.params_mut().entries_mut().iter_mut().zip(snapshot) {
            e.value = v;
        }
    }
}

fn check_sets(train: &Samples, val: &Samples) -> Result<()> {
    if train.is_empty() {
        return Err(NnError::EmptyData("training set"));
    }
    if val.is_empty() {
        return Err(NnError::EmptyData("validation set"));
    }
    Ok(())
}

/// Trains all weights with one Adam optimizer; returns the best-validation
/// weights (also left loaded in `net`) and the loss history.
pub fn train<N: Network>(net: &mut N, train: &Samples, val: &Samples, cfg: &TrainConfig) -> Result<(Vec<Tensor>, History)> {
    cfg.validate()?;
    check_sets(train, val)?;
    let opt = Adam::new(cfg.adam, net.params());
    let mut learner = SupervisedLearner::new(net, train, val, *cfg, opt);
    let history = fit(&mut learner, cfg.max_epochs, cfg.patience)?;
    Ok((learner.snapshot(), history))
}

pub const CONV_GROUP: &str = "conv";
pub const DENSE_GROUP: &str = "dense";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualHistory {
    pub conv_phase: History,
    pub dense_phase: History,
}

/// Two-stage optimization: first only the `conv` group is updated (the dense
/// head keeps its initial weights), then the `conv` group is frozen and a
/// fresh Adam fine-tunes the `dense` group. Both stages use the same early
/// stopping rule.
pub fn train_dual_optimizer<N: Network>(
    net: &mut N,
    train: &Samples,
    val: &Samples,
    cfg: &TrainConfig,
) -> Result<(Vec<Tensor>, DualHistory)> {
    cfg.validate()?;
    check_sets(train, val)?;
    for group in [CONV_GROUP, DENSE_GROUP] {
        if !net.params().has_group(group) {
            return Err(NnError::MissingPartition(group.to_string()));
        }
    }
    let in_group = |name: &'static str| move |e: &ParamEntry| e.group == name;

    let opt = Adam::with_filter(cfg.adam, net.params(), in_group(CONV_GROUP));
    let mut learner = SupervisedLearner::new(&mut *net, train, val, *cfg, opt);
    let conv_phase = fit(&mut learner, cfg.max_epochs, cfg.patience)?;

    let phase2 = TrainConfig {
        seed: mix_seed(cfg.seed, 2, 2),
        ..*cfg
    };
    let opt = Adam::with_filter(cfg.adam, net.params(), in_group(DENSE_GROUP));
    let mut learner = SupervisedLearner::new(&mut *net, train, val, phase2, opt);
    let dense_phase = fit(&mut learner, cfg.max_epochs, cfg.patience)?;
    Ok((
        learner.snapshot(),
        DualHistory {
            conv_phase,
            dense_phase,
        },
    ))
}
