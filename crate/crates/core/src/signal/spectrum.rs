use rustfft::{num_complex::Complex64, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Segment length used for per-epoch spectra (4 s at 128 Hz).
pub const DEFAULT_SEG_LEN: usize = 512;
pub const DEFAULT_OVERLAP: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    pub freqs_hz: Vec<f64>,
    pub psd: Vec<f64>,
    pub resolution_hz: f64,
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate: mean-detrended, Hann-windowed segments, averaged
/// one-sided periodograms with density scaling.
pub fn welch_psd(values: &[f64], rate_hz: f64, seg_len: usize, overlap: f64) -> Result<PowerSpectrum> {
    if seg_len == 0 || seg_len > values.len() {
        return invalid(format!("segment length {seg_len} for {} samples", values.len()));
    }
    if !(0.0..1.0).contains(&overlap) {
        return invalid(format!("overlap {overlap}"));
    }
    if !(rate_hz > 0.0) {
        return invalid(format!("sampling rate {rate_hz}"));
    }
    let step = seg_len - (overlap * seg_len as f64).floor() as usize;
    let win = hann(seg_len);
    let scale = 1.0 / (rate_hz * win.iter().map(|w| w * w).sum::<f64>());
    let n_bins = seg_len / 2 + 1;
    let fft = FftPlanner::new().plan_fft_forward(seg_len);
    let mut buf = vec![Complex64::new(0.0, 0.0); seg_len];
    let mut acc = vec![0.0; n_bins];
    let mut count = 0usize;
    let mut start = 0;
    while start + seg_len <= values.len() {
        let seg = &values[start..start + seg_len];
        let mean = seg.iter().sum::<f64>() / seg_len as f64;
        for ((b, v), w) in buf.iter_mut().zip(seg).zip(&win) {
            *b = Complex64::new((v - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        count += 1;
        start += step;
    }
    let mut psd: Vec<f64> = acc.iter().map(|a| a * scale / count as f64).collect();
    let last = if seg_len % 2 == 0 { n_bins - 1 } else { n_bins };
    for v in &mut psd[1..last] {
        *v *= 2.0;
    }
    let res = rate_hz / seg_len as f64;
    Ok(PowerSpectrum {
        freqs_hz: (0..n_bins).map(|k| k as f64 * res).collect(),
        psd,
        resolution_hz: res,
    })
}

impl PowerSpectrum {
    pub fn nyquist_hz(&self) -> f64 {
        *self.freqs_hz.last().unwrap_or(&0.0)
    }

    fn interp(&self, f: f64) -> f64 {
        let k = ((f / self.resolution_hz).floor() as usize).min(self.psd.len() - 1);
        if k + 1 >= self.psd.len() {
            return self.psd[k];
        }
        let t = (f - self.freqs_hz[k]) / self.resolution_hz;
        self.psd[k] + t * (self.psd[k + 1] - self.psd[k])
    }
}

/// Trapezoidal integral of the PSD over `[lo_hz, hi_hz]`, with linear
/// interpolation at band edges that fall between bins.
pub fn band_power(ps: &PowerSpectrum, lo_hz: f64, hi_hz: f64) -> Result<f64> {
    if !(lo_hz < hi_hz) {
        return invalid(format!("empty band [{lo_hz}, {hi_hz}]"));
    }
    if ps.psd.len() < 2 || lo_hz < 0.0 || hi_hz > ps.nyquist_hz() + 1e-9 {
        return invalid(format!("band [{lo_hz}, {hi_hz}] outside spectrum"));
    }
    let hi_hz = hi_hz.min(ps.nyquist_hz());
    let mut xs = vec![lo_hz];
    let mut ys = vec![ps.interp(lo_hz)];
    for (f, p) in ps.freqs_hz.iter().zip(&ps.psd) {
        if *f > lo_hz && *f < hi_hz {
            xs.push(*f);
            ys.push(*p);
        }
    }
    xs.push(hi_hz);
    ys.push(ps.interp(hi_hz));
    let total = xs
        .windows(2)
        .zip(ys.windows(2))
        .map(|(x, y)| (x[1] - x[0]) * (y[0] + y[1]) / 2.0)
        .sum::<f64>();
    Ok(total.max(0.0))
}

/// Magnitudes of the one-sided DFT; bin `k` is `k * rate / len`.
pub fn dft_magnitudes(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    if n == 0 {
        return Vec::new();
    }
    let mut buf: Vec<Complex64> = values.iter().map(|v| Complex64::new(*v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    buf[..n / 2 + 1].iter().map(|c| c.norm()).collect()
}
