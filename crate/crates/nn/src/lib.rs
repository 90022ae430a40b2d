//! Minimal reverse-mode autodiff for 1D convolutional and recurrent
//! classifiers: a tape [`Graph`], parameterized layers, Adam, a training
//! loop with early stopping, and a checksummed weight container.

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod layers;
pub mod optim;
pub mod params;
pub mod tensor;
pub mod train;
pub mod weights;

pub use error::{NnError, Result};
pub use graph::{Conv1dOpts, Graph, Mode, NodeId, PadMode};
pub use layers::{BatchNorm1d, BiLstm, Conv1d, Dense, LayerSpec};
pub use optim::{Adam, AdamConfig};
pub use params::{ParamId, ParamKind, ParamSet};
pub use tensor::Tensor;
pub use train::{mix_seed, History, Network, Samples, TrainConfig};
pub use weights::WeightFile;
