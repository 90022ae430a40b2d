//! Zero-phase IIR filtering with second-order sections.

use super::recording::Recording;
use crate::error::{invalid, Result};
use std::f64::consts::PI;

pub const DEFAULT_BUTTER_ORDER: usize = 4;
pub const DEFAULT_NOTCH_Q: f64 = 30.0;

/// One biquad, `a0` normalized to 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Complex {
    re: f64,
    im: f64,
}

impl Complex {
    fn new(re: f64, im: f64) -> Self {
        Self { re, im }
    }
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.im + o.im)
    }
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.im - o.im)
    }
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)
    }
    fn scale(self, s: f64) -> Self {
        Self::new(self.re * s, self.im * s)
    }
    fn div(self, o: Self) -> Self {
        let d = o.re * o.re + o.im * o.im;
        Self::new((self.re * o.re + self.im * o.im) / d, (self.im * o.re - self.re * o.im) / d)
    }
    fn sqrt(self) -> Self {
        let r = (self.re * self.re + self.im * self.im).sqrt();
        let re = ((r + self.re) / 2.0).max(0.0).sqrt();
        let im = ((r - self.re) / 2.0).max(0.0).sqrt();
        Self::new(re, if self.im < 0.0 { -im } else { im })
    }
    fn norm_sqr(self) -> f64 {
        self.re * self.re + self.im * self.im
    }
}

/// Digital Butterworth band-pass of the given prototype order, as
/// `order` second-order sections (bilinear transform with prewarping).
pub fn butterworth_bandpass_sos(lo_hz: f64, hi_hz: f64, order: usize, rate_hz: f64) -> Result<Vec<Biquad>> {
    if order == 0 {
        return invalid("filter order must be at least 1");
    }
    if !(lo_hz > 0.0 && lo_hz < hi_hz && hi_hz < rate_hz / 2.0) {
        return invalid(format!("band ({lo_hz}, {hi_hz}) Hz at {rate_hz} Hz"));
    }
    let fs2 = 2.0 * rate_hz;
    let wl = fs2 * (PI * lo_hz / rate_hz).tan();
    let wh = fs2 * (PI * hi_hz / rate_hz).tan();
    let bw = wh - wl;
    let w0sq = wl * wh;

    // Analog prototype poles, then low-pass to band-pass.
    let mut poles = Vec::with_capacity(2 * order);
    for k in 0..order {
        let theta = PI * (2 * k + order + 1) as f64 / (2 * order) as f64;
        let p = Complex::new(theta.cos(), theta.sin()).scale(bw / 2.0);
        let disc = p.mul(p).sub(Complex::new(w0sq, 0.0)).sqrt();
        poles.push(p.add(disc));
        poles.push(p.sub(disc));
    }
    let mut gain = bw.powi(order as i32);

    // Bilinear map. The band-pass has `order` zeros at s=0 (-> z=1) and
    // `order` at infinity (-> z=-1).
    let fs2c = Complex::new(fs2, 0.0);
    let mut zpoles = Vec::with_capacity(poles.len());
    let mut den = Complex::new(1.0, 0.0);
    for p in &poles {
        zpoles.push(fs2c.add(*p).div(fs2c.sub(*p)));
        den = den.mul(fs2c.sub(*p));
    }
    let num = fs2.powi(order as i32);
    gain *= Complex::new(num, 0.0).div(den).re;

    // Keep the upper-half-plane member of each conjugate pair.
    let mut upper: Vec<Complex> = zpoles.into_iter().filter(|p| p.im > 0.0).collect();
    if upper.len() != order {
        return invalid("filter design produced real poles; band too narrow for this order");
    }
    upper.sort_by(|a, b| a.norm_sqr().total_cmp(&b.norm_sqr()));
    let mut sos: Vec<Biquad> = upper
        .iter()
        .map(|p| Biquad {
            b: [1.0, 0.0, -1.0],
            a: [1.0, -2.0 * p.re, p.norm_sqr()],
        })
        .collect();
    for v in &mut sos[0].b {
        *v *= gain;
    }
    Ok(sos)
}

/// Second-order IIR notch at `f0_hz` with quality factor `q`.
pub fn notch_biquad(f0_hz: f64, q: f64, rate_hz: f64) -> Result<Biquad> {
    if !(f0_hz > 0.0 && f0_hz < rate_hz / 2.0) {
        return invalid(format!("notch at {f0_hz} Hz for {rate_hz} Hz sampling"));
    }
    if !(q > 0.0) {
        return invalid(format!("notch quality factor {q}"));
    }
    let w0 = 2.0 * PI * f0_hz / rate_hz;
    let bw = w0 / q;
    let beta = (bw / 2.0).tan();
    let gain = 1.0 / (1.0 + beta);
    Ok(Biquad {
        b: [gain, -2.0 * gain * w0.cos(), gain],
        a: [1.0, -2.0 * gain * w0.cos(), 2.0 * gain - 1.0],
    })
}

/// Magnitude response |H(e^{jw})| of a cascade at `f_hz`.
pub fn sos_gain(sos: &[Biquad], f_hz: f64, rate_hz: f64) -> f64 {
    let w = 2.0 * PI * f_hz / rate_hz;
    let z1 = Complex::new(w.cos(), -w.sin());
    let z2 = z1.mul(z1);
    let mut h = Complex::new(1.0, 0.0);
    for s in sos {
        let num = Complex::new(s.b[0], 0.0).add(z1.scale(s.b[1])).add(z2.scale(s.b[2]));
        let den = Complex::new(s.a[0], 0.0).add(z1.scale(s.a[1])).add(z2.scale(s.a[2]));
        h = h.mul(num.div(den));
    }
    h.norm_sqr().sqrt()
}

/// Direct-form II transposed cascade with initial state `zi`.
pub fn sosfilt(sos: &[Biquad], x: &[f64], zi: &mut [[f64; 2]]) -> Vec<f64> {
    let mut y = x.to_vec();
    for (s, z) in sos.iter().zip(zi.iter_mut()) {
        for v in y.iter_mut() {
            let xin = *v;
            let out = s.b[0] * xin + z[0];
            z[0] = s.b[1] * xin - s.a[1] * out + z[1];
            z[1] = s.b[2] * xin - s.a[2] * out;
            *v = out;
        }
    }
    y
}

/// Steady-state section states for a unit step input.
pub fn sosfilt_zi(sos: &[Biquad]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let (b, a) = (s.b, s.a);
            // (I - A^T) zi = b[1..] - a[1..] * b0
            let r0 = b[1] - a[1] * b[0];
            let r1 = b[2] - a[2] * b[0];
            let det = (1.0 + a[1]) + a[2];
            let z0 = (r0 + r1) / det;
            let z1 = r1 - a[2] * z0;
            let zi = [z0 * scale, z1 * scale];
            scale *= (b[0] + b[1] + b[2]) / (a[0] + a[1] + a[2]);
            zi
        })
        .collect()
}

/// Forward-backward filtering with odd-extension padding, matching the
/// common `sosfiltfilt` convention.
pub fn sosfiltfilt(sos: &[Biquad], x: &[f64]) -> Vec<f64> {
    if x.is_empty() {
        return Vec::new();
    }
    let n = x.len();
    let ntaps = 2 * sos.len() + 1;
    let trailing = sos.iter().filter(|s| s.b[2] == 0.0).count().min(sos.iter().filter(|s| s.a[2] == 0.0).count());
    let pad = (3 * (ntaps - trailing)).min(n - 1);

    let mut ext = Vec::with_capacity(n + 2 * pad);
    for i in (1..=pad).rev() {
        ext.push(2.0 * x[0] - x[i]);
    }
    ext.extend_from_slice(x);
    for i in 1..=pad {
        ext.push(2.0 * x[n - 1] - x[n - 1 - i]);
    }

    let zi = sosfilt_zi(sos);
    let mut z: Vec<[f64; 2]> = zi.iter().map(|s| [s[0] * ext[0], s[1] * ext[0]]).collect();
    let mut y = sosfilt(sos, &ext, &mut z);
    y.reverse();
    let mut z: Vec<[f64; 2]> = zi.iter().map(|s| [s[0] * y[0], s[1] * y[0]]).collect();
    let mut y = sosfilt(sos, &y, &mut z);
    y.reverse();
    y[pad..pad + n].to_vec()
}

pub fn butterworth_bandpass(rec: &Recording, lo_hz: f64, hi_hz: f64, order: usize) -> Result<Recording> {
    let sos = butterworth_bandpass_sos(lo_hz, hi_hz, order, rec.rate_hz)?;
    Ok(rec.with_samples(sosfiltfilt(&sos, &rec.samples)))
}

pub fn notch_filter(rec: &Recording, f0_hz: f64, q: f64) -> Result<Recording> {
    let s = notch_biquad(f0_hz, q, rec.rate_hz)?;
    Ok(rec.with_samples(sosfiltfilt(&[s], &rec.samples)))
}
