//! Rational polyphase resampling with a Kaiser-windowed sinc anti-alias
//! filter. Output sample `m` sits at time `m / target_hz`, aligned with the
//! first input sample.

use super::recording::Recording;
use crate::error::{invalid, CoreError, Result};

const KAISER_BETA: f64 = 5.0;
const HALF_LEN_PER_RATE: usize = 10;
/// Rates are matched to this resolution when forming the rational ratio.
const RATE_QUANTUM: f64 = 1e-3;

pub fn resample(rec: &Recording, target_hz: f64) -> Result<Recording> {
    if rec.samples.is_empty() {
        return Err(CoreError::EmptyRecording);
    }
    if !(target_hz > 0.0 && target_hz.is_finite()) {
        return invalid(format!("target rate {target_hz} Hz"));
    }
    let (up, down) = ratio(rec.rate_hz, target_hz)?;
    let samples = if up == down {
        rec.samples.clone()
    } else {
        resample_poly(&rec.samples, up, down)
    };
    Ok(Recording {
        id: rec.id.clone(),
        rate_hz: target_hz,
        samples,
        start_offset_s: rec.start_offset_s,
    })
}

/// Reduced integer ratio `target / source`.
pub fn ratio(source_hz: f64, target_hz: f64) -> Result<(usize, usize)> {
    let up = (target_hz / RATE_QUANTUM).round();
    let down = (source_hz / RATE_QUANTUM).round();
    if up < 1.0 || down < 1.0 || up > u32::MAX as f64 || down > u32::MAX as f64 {
        return invalid(format!("cannot form a ratio for {source_hz} -> {target_hz} Hz"));
    }
    let (up, down) = (up as usize, down as usize);
    let g = gcd(up, down);
    Ok((up / g, down / g))
}

fn gcd(mut a: usize, mut b: usize) -> usize {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Upsample by `up`, low-pass, downsample by `down`.
pub fn resample_poly(x: &[f64], up: usize, down: usize) -> Vec<f64> {
    let max_rate = up.max(down);
    let half = HALF_LEN_PER_RATE * max_rate;
    let h = lowpass_taps(2 * half + 1, 1.0 / max_rate as f64, up as f64);
    let n_out = (x.len() * up).div_ceil(down);
    let n = x.len() as i64;
    let (up_i, half_i) = (up as i64, half as i64);
    let mut out = Vec::with_capacity(n_out);
    for m in 0..n_out {
        // y[m] = sum_k x[k] h[m*down - k*up + half]
        let t = (m * down) as i64 + half_i;
        let k_lo = (t - 2 * half_i).max(0);
        let k_lo = (k_lo + up_i - 1) / up_i;
        let k_hi = (t / up_i).min(n - 1);
        let mut acc = 0.0;
        let mut k = k_lo;
        while k <= k_hi {
            acc += x[k as usize] * h[(t - k * up_i) as usize];
            k += 1;
        }
        out.push(acc);
    }
    out
}

/// Windowed-sinc low-pass with unit DC gain times `gain`. `cutoff` is a
/// fraction of Nyquist.
fn lowpass_taps(len: usize, cutoff: f64, gain: f64) -> Vec<f64> {
    let mid = (len - 1) as f64 / 2.0;
    let i0_beta = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..len)
        .map(|i| {
            let m = i as f64 - mid;
            let r = 2.0 * i as f64 / (len - 1) as f64 - 1.0;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
            cutoff * sinc(cutoff * m) * w
        })
        .collect();
    let s: f64 = h.iter().sum();
    for v in &mut h {
        *v *= gain / s;
    }
    h
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = std::f64::consts::PI * x;
        px.sin() / px
    }
}

/// Modified Bessel function of the first kind, order 0 (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}
