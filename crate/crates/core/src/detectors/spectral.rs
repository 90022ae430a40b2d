use serde::{Deserialize, Serialize};

use crate::dataset::Stage;
use crate::error::{CoreError, Result};
use crate::signal::filter::{DEFAULT_BUTTER_ORDER, DEFAULT_NOTCH_Q};
use crate::signal::{band_power, butterworth_bandpass, notch_filter, raw_epochs, welch_psd, Recording, EPOCH_S, WINDOW_S};

pub const LOW_BAND_HZ: (f64, f64) = (0.75, 4.5);
pub const HIGH_BAND_HZ: (f64, f64) = (20.0, 30.0);
pub const DEFAULT_MULTIPLIER: f64 = 2.0;
pub const LINE_HZ: f64 = 50.0;
pub const PASSBAND_HZ: (f64, f64) = (0.5, 40.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralThresholdState {
    pub baseline_low: f64,
    pub baseline_high: f64,
    pub multiplier: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralDecision {
    Artifact,
    Clean,
    NotApplicable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralEpoch {
    pub epoch_index: usize,
    pub low_power: f64,
    pub high_power: f64,
    pub decision: SpectralDecision,
}

impl SpectralEpoch {
    /// Larger of the two band powers relative to their baselines.
    pub fn ratio(&self, state: &SpectralThresholdState) -> f64 {
        (self.low_power / state.baseline_low).max(self.high_power / state.baseline_high)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralResult {
    pub state: SpectralThresholdState,
    pub epochs: Vec<SpectralEpoch>,
}

/// Mean that does not depend on the order of `values`.
fn ordered_mean(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    values.iter().sum::<f64>() / values.len() as f64
}

/// Band powers of each 20-s epoch of an already filtered recording.
pub fn epoch_band_powers(rec: &Recording) -> Result<Vec<(f64, f64)>> {
    let seg = (WINDOW_S * rec.rate_hz).round() as usize;
    raw_epochs(rec, EPOCH_S)
        .into_iter()
        .map(|e| {
            let ps = welch_psd(e, rec.rate_hz, seg, 0.5)?;
            Ok((
                band_power(&ps, LOW_BAND_HZ.0, LOW_BAND_HZ.1)?,
                band_power(&ps, HIGH_BAND_HZ.0, HIGH_BAND_HZ.1)?,
            ))
        })
        .collect()
}

/// Per-epoch decisions from band powers and stages: an NREM epoch is an
/// artifact when either band exceeds `multiplier` times its NREM mean.
pub fn spectral_decide(powers: &[(f64, f64)], stages: &[Stage], multiplier: f64) -> Result<SpectralResult> {
    if stages.len() != powers.len() {
        return Err(CoreError::InvalidArgument(format!(
            "{} stages for {} epochs",
            stages.len(),
            powers.len()
        )));
    }
    if !(multiplier > 0.0) {
        return Err(CoreError::InvalidArgument(format!("multiplier {multiplier} must be positive")));
    }
    let (mut low, mut high): (Vec<f64>, Vec<f64>) = powers
        .iter()
        .zip(stages)
        .filter(|(_, s)| s.is_nrem())
        .map(|(p, _)| *p)
        .unzip();
    if low.is_empty() {
        return Err(CoreError::Undefined("no NREM epochs, spectral baseline undefined".into()));
    }
    let state = SpectralThresholdState {
        baseline_low: ordered_mean(&mut low),
        baseline_high: ordered_mean(&mut high),
        multiplier,
    };
    if !(state.baseline_low > 0.0 && state.baseline_high > 0.0) {
        return Err(CoreError::Undefined("NREM band power is zero, spectral baseline undefined".into()));
    }
    let epochs = powers
        .iter()
        .zip(stages)
        .enumerate()
        .map(|(i, (&(lp, hp), s))| {
            let decision = if !s.is_nrem() {
                SpectralDecision::NotApplicable
            } else if lp > multiplier * state.baseline_low || hp > multiplier * state.baseline_high {
                SpectralDecision::Artifact
            } else {
                SpectralDecision::Clean
            };
            SpectralEpoch { epoch_index: i, low_power: lp, high_power: hp, decision }
        })
        .collect();
    Ok(SpectralResult { state, epochs })
}

/// Notch at 50 Hz, band-pass 0.5-40 Hz, then threshold per-epoch band power
/// against the NREM baseline. `stages[i]` belongs to epoch `i`.
pub fn spectral_detect(rec: &Recording, stages: &[Stage], multiplier: f64) -> Result<SpectralResult> {
    let notched = notch_filter(rec, LINE_HZ, DEFAULT_NOTCH_Q)?;
    let filtered = butterworth_bandpass(&notched, PASSBAND_HZ.0, PASSBAND_HZ.1, DEFAULT_BUTTER_ORDER)?;
    spectral_decide(&epoch_band_powers(&filtered)?, stages, multiplier)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_powers_flag_nothing() {
        let powers = vec![(3.0, 0.5); 6];
        let stages = [Stage::N2; 6];
        let r = spectral_decide(&powers, &stages, 2.0).unwrap();
        assert!(r.epochs.iter().all(|e| e.decision == SpectralDecision::Clean));
        assert_eq!(r.state.baseline_low, 3.0);
    }

    #[test]
    fn wake_and_rem_are_not_applicable() {
        let powers = vec![(1.0, 1.0), (100.0, 100.0), (1.0, 1.0), (100.0, 1.0)];
        let stages = [Stage::N2, Stage::W, Stage::N3, Stage::Rem];
        let r = spectral_decide(&powers, &stages, 2.0).unwrap();
        let d: Vec<_> = r.epochs.iter().map(|e| e.decision).collect();
        assert_eq!(
            d,
            [SpectralDecision::Clean, SpectralDecision::NotApplicable, SpectralDecision::Clean, SpectralDecision::NotApplicable]
        );
    }

    #[test]
    fn needs_nrem_epochs() {
        assert!(spectral_decide(&[(1.0, 1.0)], &[Stage::W], 2.0).is_err());
        assert!(spectral_decide(&[(1.0, 1.0)], &[], 2.0).is_err());
    }
}
