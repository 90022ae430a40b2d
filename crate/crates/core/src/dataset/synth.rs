//! Seeded synthetic sleep EEG with exactly known artifact intervals.

use std::f64::consts::PI;

use eegart_nn::mix_seed;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::labels::{ArtifactKind, Stage, TruthInterval};
use crate::error::{invalid, Result};
use crate::signal::filter::{butterworth_bandpass_sos, sosfiltfilt};
use crate::signal::{Recording, EPOCH_S, HEAD_TRIM_S};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Background {
    /// Standard deviation of the 1/f component, µV.
    pub pink_noise_gain: f64,
    /// Amplitude of the 0.75–4.5 Hz oscillators in N2, µV.
    pub delta_osc_gain: f64,
    /// Peak amplitude of 11–15 Hz spindles, µV.
    pub spindle_gain: f64,
}

impl Default for Background {
    fn default() -> Self {
        Self {
            pink_noise_gain: 12.0,
            delta_osc_gain: 20.0,
            spindle_gain: 12.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub seed: u64,
    /// Full length including the head that preprocessing trims.
    pub duration_s: f64,
    pub rate_hz: f64,
    /// Fraction of scored epochs that receive one artifact.
    pub artifact_rate: f64,
    pub artifact_kinds: Vec<ArtifactKind>,
    pub background: Background,
    /// Fraction of scored epochs that start a slow sweat-like drift.
    pub drift_rate: f64,
    pub subjects: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            duration_s: HEAD_TRIM_S + 100.0 * EPOCH_S,
            rate_hz: 250.0,
            artifact_rate: 0.045,
            artifact_kinds: ArtifactKind::ALL.to_vec(),
            background: Background::default(),
            drift_rate: 0.05,
            subjects: 1,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..0.5).contains(&self.artifact_rate) {
            return invalid(format!("artifact_rate {} must be in [0, 0.5)", self.artifact_rate));
        }
        if !(0.0..=1.0).contains(&self.drift_rate) {
            return invalid(format!("drift_rate {}", self.drift_rate));
        }
        if !(self.rate_hz >= 128.0 && self.rate_hz.is_finite()) {
            return invalid(format!("rate_hz {} must be at least 128", self.rate_hz));
        }
        if !(self.duration_s >= HEAD_TRIM_S + EPOCH_S) {
            return invalid(format!("duration_s {} leaves no scored epoch", self.duration_s));
        }
        if self.artifact_rate > 0.0 && self.artifact_kinds.is_empty() {
            return invalid("artifact_kinds is empty");
        }
        if self.subjects == 0 {
            return invalid("subjects must be at least 1");
        }
        let b = &self.background;
        if [b.pink_noise_gain, b.delta_osc_gain, b.spindle_gain].iter().any(|g| !(*g >= 0.0)) {
            return invalid("background gains must be non-negative");
        }
        Ok(())
    }

    /// Whole 20-s epochs after the head, i.e. the scored ones.
    pub fn scored_epochs(&self) -> usize {
        ((self.duration_s - HEAD_TRIM_S) / EPOCH_S).floor() as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticRecording {
    pub recording: Recording,
    /// Sorted, non-overlapping, in recording time.
    pub truth: Vec<TruthInterval>,
    /// One stage per scored epoch.
    pub stages: Vec<Stage>,
}

/// Seed of subject `i` in a corpus built from `base`.
pub fn subject_seed(base: u64, i: usize) -> u64 {
    mix_seed(base, 0x5u64, i as u64 + 1)
}

pub fn subject_id(i: usize) -> String {
    format!("sub{:02}", i + 1)
}

/// One recording per subject; subject `i` uses `subject_seed(spec.seed, i)`.
pub fn generate_corpus(spec: &SyntheticSpec) -> Result<Vec<SyntheticRecording>> {
    spec.validate()?;
    (0..spec.subjects)
        .map(|i| {
            let mut s = spec.clone();
            s.seed = subject_seed(spec.seed, i);
            generate_with_id(&s, subject_id(i))
        })
        .collect()
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticRecording> {
    generate_with_id(spec, format!("syn{}", spec.seed))
}

fn stage_gains(s: Stage) -> (f64, f64, f64) {
    // (pink, delta, spindle)
    match s {
        Stage::W => (1.3, 0.3, 0.0),
        Stage::N1 => (1.0, 0.6, 0.0),
        Stage::N2 => (1.0, 1.0, 1.0),
        Stage::N3 => (0.9, 2.2, 0.3),
        Stage::Rem => (1.1, 0.5, 0.0),
    }
}

fn hypnogram(rng: &mut ChaCha8Rng, n: usize) -> Vec<Stage> {
    let mut out = Vec::with_capacity(n);
    let mut stage = Stage::W;
    while out.len() < n {
        let run = rng.gen_range(3..16);
        out.extend(std::iter::repeat_n(stage, run.min(n - out.len())));
        let u: f64 = rng.gen();
        stage = match stage {
            Stage::W => Stage::N1,
            Stage::N1 => {
                if u < 0.8 {
                    Stage::N2
                } else {
                    Stage::W
                }
            }
            Stage::N2 => {
                if u < 0.4 {
                    Stage::N3
                } else if u < 0.7 {
                    Stage::Rem
                } else if u < 0.9 {
                    Stage::N1
                } else {
                    Stage::W
                }
            }
            Stage::N3 => Stage::N2,
            Stage::Rem => {
                if u < 0.7 {
                    Stage::N2
                } else {
                    Stage::W
                }
            }
        };
    }
    out
}

/// Unit-variance 1/f noise (Kellet's filter bank on white noise).
fn pink_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut b = [0.0f64; 7];
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = rng.sample(StandardNormal);
            b[0] = 0.99886 * b[0] + w * 0.0555179;
            b[1] = 0.99332 * b[1] + w * 0.0750759;
            b[2] = 0.96900 * b[2] + w * 0.1538520;
            b[3] = 0.86650 * b[3] + w * 0.3104856;
            b[4] = 0.55000 * b[4] + w * 0.5329522;
            b[5] = -0.7616 * b[5] - w * 0.0168980;
            let p = b.iter().sum::<f64>() + w * 0.5362;
            b[6] = w * 0.115926;
            p
        })
        .collect();
    let mean = out.iter().sum::<f64>() / n as f64;
    let sd = (out.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64).sqrt();
    for v in &mut out {
        *v = (*v - mean) / sd.max(1e-12);
    }
    out
}

fn hann_env(u: f64) -> f64 {
    (PI * u).sin().powi(2)
}

fn generate_with_id(spec: &SyntheticSpec, id: String) -> Result<SyntheticRecording> {
    spec.validate()?;
    let rate = spec.rate_hz;
    let n = (spec.duration_s * rate).round() as usize;
    let n_scored = spec.scored_epochs();
    let grid = n_scored + 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let bg = &spec.background;

    let stages_grid = hypnogram(&mut rng, grid);
    let subject_scale = rng.gen_range(0.75..1.3);
    let t_of = |i: usize| i as f64 / rate;

    // Per-sample stage gains, linearly blended between epoch centres.
    let gains_at = |i: usize| -> (f64, f64, f64) {
        let pos = (t_of(i) / EPOCH_S - 0.5).max(0.0);
        let k = (pos.floor() as usize).min(grid - 1);
        let k2 = (k + 1).min(grid - 1);
        let f = (pos - k as f64).min(1.0);
        let (a, b) = (stage_gains(stages_grid[k]), stage_gains(stages_grid[k2]));
        (a.0 + f * (b.0 - a.0), a.1 + f * (b.1 - a.1), a.2 + f * (b.2 - a.2))
    };

    let pink = pink_noise(&mut rng, n);
    let osc: Vec<(f64, f64, f64, f64)> = (0..3)
        .map(|_| {
            (
                rng.gen_range(0.75..4.5),
                rng.gen_range(0.0..2.0 * PI),
                rng.gen_range(30.0..90.0),
                rng.gen_range(0.0..2.0 * PI),
            )
        })
        .collect();
    let mut x: Vec<f64> = (0..n)
        .map(|i| {
            let t = t_of(i);
            let (gp, gd, _) = gains_at(i);
            let delta: f64 = osc
                .iter()
                .map(|(f, ph, period, ph2)| {
                    (1.0 + 0.5 * (2.0 * PI * t / period + ph2).sin()) * (2.0 * PI * f * t + ph).sin()
                })
                .sum::<f64>()
                / 3f64.sqrt();
            gp * bg.pink_noise_gain * pink[i] + gd * bg.delta_osc_gain * delta
        })
        .collect();

    // Spindles, mostly in N2.
    let mut t = rng.gen_range(2.0..15.0);
    while t < spec.duration_s - 2.0 {
        let dur = rng.gen_range(0.5..2.0);
        let f = rng.gen_range(11.0..15.0);
        let ph = rng.gen_range(0.0..2.0 * PI);
        let (s, e) = ((t * rate) as usize, (((t + dur) * rate) as usize).min(n));
        let (_, _, gs) = gains_at(s);
        for (i, v) in x.iter_mut().enumerate().take(e).skip(s) {
            let u = (t_of(i) - t) / dur;
            *v += gs * bg.spindle_gain * hann_env(u) * (2.0 * PI * f * t_of(i) + ph).sin();
        }
        t += dur + rng.gen_range(4.0..20.0);
    }

    for v in &mut x {
        *v *= subject_scale;
    }
    let bg_sd = (x.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt().max(1e-9);

    // Sweat-like slow drifts; realistic negatives, never labeled.
    let n_drift = (spec.drift_rate * n_scored as f64).round() as usize;
    for _ in 0..n_drift {
        let dur = rng.gen_range(6.0..15.0);
        let t0 = rng.gen_range(HEAD_TRIM_S..(spec.duration_s - dur).max(HEAD_TRIM_S + 1e-9));
        let f = rng.gen_range(0.15..0.5);
        let amp = rng.gen_range(60.0..150.0) * if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let (s, e) = ((t0 * rate).ceil() as usize, (((t0 + dur) * rate).ceil() as usize).min(n));
        for (i, v) in x.iter_mut().enumerate().take(e).skip(s) {
            let u = (t_of(i) - t0) / dur;
            *v += amp * hann_env(u) * (2.0 * PI * f * (t_of(i) - t0)).sin();
        }
    }

    // Artifacts: one per chosen epoch, fully inside it.
    let n_art = (spec.artifact_rate * n_scored as f64).round() as usize;
    let mut chosen: Vec<usize> = sample(&mut rng, n_scored, n_art).into_vec();
    chosen.sort_unstable();
    let mut truth = Vec::with_capacity(n_art);
    let emg_sos = butterworth_bandpass_sos(20.0, 60.0, 4, rate)?;
    for e in chosen {
        let kind = spec.artifact_kinds[rng.gen_range(0..spec.artifact_kinds.len())];
        let dur = match kind {
            ArtifactKind::Spike => rng.gen_range(0.06..0.2),
            ArtifactKind::EmgBurst => rng.gen_range(0.5..3.0),
            ArtifactKind::MotionStep => rng.gen_range(1.0..4.0),
            ArtifactKind::AmplitudeSurge => rng.gen_range(1.0..4.0),
        };
        let margin = 0.25;
        let epoch_t0 = HEAD_TRIM_S + e as f64 * EPOCH_S;
        let t0 = epoch_t0 + rng.gen_range(margin..EPOCH_S - dur - margin);
        let t1 = t0 + dur;
        let (s, end) = ((t0 * rate).ceil() as usize, ((t1 * rate).ceil() as usize).min(n));
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        match kind {
            ArtifactKind::Spike => {
                let amp = sign * rng.gen_range(150.0..400.0);
                for (i, v) in x.iter_mut().enumerate().take(end).skip(s) {
                    *v += amp * (PI * (t_of(i) - t0) / dur).sin();
                }
            }
            ArtifactKind::EmgBurst => {
                let noise: Vec<f64> = (s..end).map(|_| rng.sample(StandardNormal)).collect();
                let burst = sosfiltfilt(&emg_sos, &noise);
                let rms = (burst.iter().map(|v| v * v).sum::<f64>() / burst.len().max(1) as f64).sqrt();
                let gain = 5.0 * bg_sd / rms.max(1e-12);
                for (k, i) in (s..end).enumerate() {
                    let u = (t_of(i) - t0) / dur;
                    let taper = (u / 0.1).min((1.0 - u) / 0.1).clamp(0.0, 1.0);
                    x[i] += gain * burst[k] * taper;
                }
            }
            ArtifactKind::MotionStep => {
                let amp = sign * rng.gen_range(100.0..300.0);
                let tau = dur / 3.0;
                let floor = (-dur / tau).exp();
                for (i, v) in x.iter_mut().enumerate().take(end).skip(s) {
                    let dt = t_of(i) - t0;
                    *v += amp * ((-dt / tau).exp() - floor) / (1.0 - floor);
                }
            }
            ArtifactKind::AmplitudeSurge => {
                for (i, v) in x.iter_mut().enumerate().take(end).skip(s) {
                    *v *= 1.0 + 3.0 * hann_env((t_of(i) - t0) / dur);
                }
            }
        }
        truth.push(TruthInterval {
            start_s: t0,
            end_s: t1,
            kind,
        });
    }

    Ok(SyntheticRecording {
        recording: Recording::new(id, rate, x)?,
        truth,
        stages: stages_grid[1..].to_vec(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_dense_artifacts() {
        let spec = SyntheticSpec { artifact_rate: 0.5, ..Default::default() };
        assert!(generate_synthetic(&spec).is_err());
    }

    #[test]
    fn pink_noise_is_standardized() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = pink_noise(&mut rng, 10_000);
        let m = p.iter().sum::<f64>() / p.len() as f64;
        let v = p.iter().map(|x| x * x).sum::<f64>() / p.len() as f64;
        assert!(m.abs() < 1e-12 && (v - 1.0).abs() < 1e-9);
    }

    #[test]
    fn stages_cover_scored_epochs() {
        let s = generate_synthetic(&SyntheticSpec::default()).unwrap();
        assert_eq!(s.stages.len(), 100);
        assert_eq!(s.recording.len(), 2020 * 250);
    }
}
