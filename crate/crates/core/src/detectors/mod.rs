pub mod spectral;
pub mod std_dev;

pub use spectral::{
    spectral_decide, spectral_detect, SpectralDecision, SpectralEpoch, SpectralResult, SpectralThresholdState,
    DEFAULT_MULTIPLIER,
};
pub use std_dev::{std_detect, std_roc, sweep_std_threshold, zscore, StdDetection, StdDetectorConfig, StdSweep};
