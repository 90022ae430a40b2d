//! 1D convolutional block attention: channel attention then spatial
//! attention, each applied multiplicatively.

use eegart_nn::layers::{Conv1d, Dense, LayerSpec};
use eegart_nn::{Conv1dOpts, Graph, NodeId, ParamSet, Result};
use rand::Rng;

pub const DEFAULT_REDUCTION: usize = 8;
pub const SPATIAL_KERNEL: usize = 7;

#[derive(Debug, Clone)]
pub struct ChannelAttention {
    pub fc1: Dense,
    pub fc2: Dense,
    pub channels: usize,
    pub reduction: usize,
}

impl ChannelAttention {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, group: &str, channels: usize, reduction: usize, rng: &mut R) -> Self {
        let hidden = (channels / reduction.max(1)).max(1);
        Self {
            fc1: Dense::new(ps, &format!("{name}.fc1"), group, channels, hidden, rng),
            fc2: Dense::new(ps, &format!("{name}.fc2"), group, hidden, channels, rng),
            channels,
            reduction,
        }
    }

    pub fn hidden(&self) -> usize {
        self.fc1.units
    }

    fn mlp(&self, g: &mut Graph, ps: &ParamSet, x: NodeId) -> Result<NodeId> {
        let h = self.fc1.forward(g, ps, x)?;
        let h = g.relu(h);
        self.fc2.forward(g, ps, h)
    }

    /// `M_c(F)`, shape `[B, C, 1]`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, f: NodeId) -> Result<NodeId> {
        let b = g.value(f).dim(0);
        let c = self.channels;
        let avg = g.mean(f, 2)?;
        let avg = g.reshape(avg, vec![b, c])?;
        let max = g.max(f, 2)?;
        let max = g.reshape(max, vec![b, c])?;
        let a = self.mlp(g, ps, avg)?;
        let m = self.mlp(g, ps, max)?;
        let s = g.add(a, m)?;
        let s = g.sigmoid(s);
        g.reshape(s, vec![b, c, 1])
    }
}

#[derive(Debug, Clone)]
pub struct SpatialAttention {
    pub conv: Conv1d,
}

impl SpatialAttention {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, group: &str, rng: &mut R) -> Self {
        let opts = Conv1dOpts::symmetric(1, SPATIAL_KERNEL / 2);
        Self {
            conv: Conv1d::new(ps, &format!("{name}.conv"), group, 2, 1, SPATIAL_KERNEL, opts, rng),
        }
    }

    /// `M_s(F')`, shape `[B, 1, L]`.
    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, f: NodeId) -> Result<NodeId> {
        let avg = g.mean(f, 1)?;
        let max = g.max(f, 1)?;
        let both = g.concat(&[avg, max])?;
        let s = self.conv.forward(g, ps, both)?;
        Ok(g.sigmoid(s))
    }
}

#[derive(Debug, Clone)]
pub struct Cbam {
    pub channel: ChannelAttention,
    pub spatial: SpatialAttention,
}

impl Cbam {
    pub fn new<R: Rng>(ps: &mut ParamSet, name: &str, group: &str, channels: usize, reduction: usize, rng: &mut R) -> Self {
        Self {
            channel: ChannelAttention::new(ps, &format!("{name}.channel"), group, channels, reduction, rng),
            spatial: SpatialAttention::new(ps, &format!("{name}.spatial"), group, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, ps: &ParamSet, f: NodeId) -> Result<NodeId> {
        let mc = self.channel.forward(g, ps, f)?;
        let refined = g.broadcast_mul(f, mc)?;
        let ms = self.spatial.forward(g, ps, refined)?;
        g.broadcast_mul(refined, ms)
    }

    pub fn params(&self) -> [eegart_nn::ParamId; 6] {
        [
            self.channel.fc1.weight,
            self.channel.fc1.bias,
            self.channel.fc2.weight,
            self.channel.fc2.bias,
            self.spatial.conv.weight,
            self.spatial.conv.bias,
        ]
    }

    /// Sets every attention parameter to zero, which makes both gates 0.5.
    pub fn zero(&self, ps: &mut ParamSet) {
        for id in self.params() {
            ps.get_mut(id).data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn spec(&self) -> LayerSpec {
        LayerSpec::Cbam {
            channels: self.channel.channels,
            reduction: self.channel.reduction,
            spatial_kernel: SPATIAL_KERNEL,
        }
    }
}
