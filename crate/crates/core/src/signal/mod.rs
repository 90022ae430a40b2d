pub mod epoch;
pub mod filter;
pub mod io;
pub mod recording;
pub mod resample;
pub mod spectrum;

pub use epoch::{
    epoch_minmax_scale, raw_epochs, segment_epochs, Epoch, Label, Scaled, EPOCH_LEN, EPOCH_S, HEAD_TRIM_S,
    TARGET_RATE_HZ, WINDOWS_PER_EPOCH, WINDOW_S,
};
pub use filter::{butterworth_bandpass, notch_filter};
pub use recording::{trim_head, Recording};
pub use resample::resample;
pub use spectrum::{band_power, welch_psd, PowerSpectrum};

use crate::error::Result;

/// Model-input preprocessing: drop the head, resample to 128 Hz.
pub fn prepare(rec: &Recording) -> Result<Recording> {
    let trimmed = trim_head(rec, HEAD_TRIM_S)?;
    resample(&trimmed, TARGET_RATE_HZ)
}
