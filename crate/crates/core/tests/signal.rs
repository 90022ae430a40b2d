use std::f64::consts::PI;

use eegart_core::signal::filter::{butterworth_bandpass_sos, sosfiltfilt};
use eegart_core::signal::io::{encode_raw, read_csv, read_raw, write_csv, write_raw};
use eegart_core::signal::resample::resample_poly;
use eegart_core::signal::spectrum::{dft_magnitudes, hann};
use eegart_core::signal::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn sine(f: f64, rate: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * f * i as f64 / rate).sin()).collect()
}

fn rms(x: &[f64]) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}

fn rec(rate: f64, samples: Vec<f64>) -> Recording {
    Recording::new("t", rate, samples).unwrap()
}

// Values produced by scipy.signal.resample_poly(x, 64, 125).
#[test]
fn resample_matches_reference_values() {
    let x: Vec<f64> = (0..40)
        .map(|i| (2.0 * PI * 10.0 * i as f64 / 250.0).sin() + i as f64 * 0.01)
        .collect();
    let y = resample_poly(&x, 64, 125);
    let expected = [
        0.04100898, 0.48530679, 0.8734511, 1.05307306, 1.00310133, 0.73159231, 0.3123919, -0.1542779,
    ];
    for (a, b) in y.iter().zip(expected) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

// Values produced by scipy.signal.sosfiltfilt with butter(4, [0.5, 40], fs=128).
#[test]
fn filtfilt_matches_reference_values() {
    let sos = butterworth_bandpass_sos(0.5, 40.0, 4, 128.0).unwrap();
    let x: Vec<f64> = (0..300).map(|i| (i as f64 * 0.3).cos() + i as f64 * 0.02).collect();
    let y = sosfiltfilt(&sos, &x);
    let head = [-0.14405784, -0.16861938, -0.27053852, -0.45534454, -0.69222379];
    let tail = [0.45767225, 0.19791622, -0.07406594];
    for (a, b) in y.iter().zip(head) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
    for (a, b) in y[297..].iter().zip(tail) {
        assert!((a - b).abs() < 1e-7, "{a} vs {b}");
    }
}

#[test]
fn resampled_tone_keeps_frequency_and_amplitude() {
    let out = resample(&rec(250.0, sine(10.0, 250.0, 5000)), 128.0).unwrap();
    assert_eq!(out.len(), 2560);
    let mags = dft_magnitudes(&out.samples);
    let k = mags.iter().enumerate().skip(1).max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
    assert!((k as f64 * 128.0 / 2560.0 - 10.0).abs() < 1e-9);
    let truth = sine(10.0, 128.0, 2560);
    let interior = 100..2460;
    let amp = rms(&out.samples[interior.clone()]) / rms(&truth[interior.clone()]);
    assert!((amp - 1.0).abs() < 0.02, "amplitude ratio {amp}");
    let err = out.samples[interior.clone()]
        .iter()
        .zip(&truth[interior])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.02, "max deviation {err}");
}

#[test]
fn resample_downsampling_suppresses_aliases() {
    // 100 Hz is above the 64 Hz output Nyquist and must not fold back.
    let out = resample(&rec(250.0, sine(100.0, 250.0, 5000)), 128.0).unwrap();
    assert!(rms(&out.samples[100..2460]) < 0.01);
}

#[test]
fn resample_errors_and_duration() {
    assert!(Recording::new("e", 250.0, vec![]).is_err());
    let r = rec(250.0, vec![0.0; 1234]);
    let out = resample(&r, 128.0).unwrap();
    assert!((out.duration_s() - r.duration_s()).abs() <= 1.0 / 128.0);
    assert!(resample(&r, -1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn resampled_tone_recovered_within_one_bin(f in 1.0f64..50.0) {
        let out = resample(&rec(250.0, sine(f, 250.0, 5000)), 128.0).unwrap();
        let mags = dft_magnitudes(&out.samples);
        let k = mags.iter().enumerate().skip(1).max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let bin = 128.0 / out.len() as f64;
        prop_assert!((k as f64 * bin - f).abs() <= bin);
    }

    #[test]
    fn minmax_idempotent_and_order_preserving(v in prop::collection::vec(-1e3f64..1e3, 2..200)) {
        let s = epoch_minmax_scale(&v);
        prop_assume!(!s.degenerate);
        let argmin = |x: &[f64]| x.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        let argmax = |x: &[f64]| x.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        prop_assert_eq!(argmin(&v), argmin(&s.values));
        prop_assert_eq!(argmax(&v), argmax(&s.values));
        let lo = s.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = s.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        prop_assert_eq!((lo, hi), (0.0, 1.0));
        let again = epoch_minmax_scale(&s.values);
        for (a, b) in again.values.iter().zip(&s.values) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn bandpass_passes_20_hz_and_rejects_60_hz_and_dc() {
    let n = 128 * 60;
    let pass = butterworth_bandpass(&rec(128.0, sine(20.0, 128.0, n)), 0.5, 40.0, 4).unwrap();
    let ratio = rms(&pass.samples[512..n - 512]) / rms(&sine(20.0, 128.0, n)[512..n - 512]);
    assert!((ratio - 1.0).abs() < 0.05, "20 Hz ratio {ratio}");

    let stop = butterworth_bandpass(&rec(128.0, sine(60.0, 128.0, n)), 0.5, 40.0, 4).unwrap();
    let ratio = rms(&stop.samples[512..n - 512]) / rms(&sine(60.0, 128.0, n)[512..n - 512]);
    assert!(ratio < 0.2, "60 Hz ratio {ratio}");

    let dc = butterworth_bandpass(&rec(128.0, vec![7.0; n]), 0.5, 40.0, 4).unwrap();
    assert!(dc.samples.iter().all(|v| v.abs() < 1e-6));
}

#[test]
fn bandpass_rejects_invalid_band() {
    let r = rec(128.0, vec![0.0; 1000]);
    assert!(butterworth_bandpass(&r, 40.0, 0.5, 4).is_err());
    assert!(butterworth_bandpass(&r, 0.5, 70.0, 4).is_err());
}

#[test]
fn bandpass_is_zero_phase() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = 4096;
    let noise: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    // Band-limit first so the filter passes the test signal almost intact.
    let x = butterworth_bandpass(&rec(128.0, noise), 2.0, 20.0, 4).unwrap().samples;
    let y = butterworth_bandpass(&rec(128.0, x.clone()), 0.5, 40.0, 4).unwrap().samples;
    let xcorr = |lag: i64| -> f64 {
        (0..n as i64)
            .filter_map(|i| {
                let j = i + lag;
                (0..n as i64).contains(&j).then(|| x[i as usize] * y[j as usize])
            })
            .sum()
    };
    let best = (-20..=20).max_by(|a, b| xcorr(*a).total_cmp(&xcorr(*b))).unwrap();
    assert_eq!(best, 0);
}

#[test]
fn notch_behaviour() {
    let n = 128 * 60;
    let mid = 1024..n - 1024;
    let through = |f: f64| {
        let x = sine(f, 128.0, n);
        let y = notch_filter(&rec(128.0, x.clone()), 50.0, 30.0).unwrap().samples;
        rms(&y[mid.clone()]) / rms(&x[mid.clone()])
    };
    assert!(through(50.0) < 0.1);
    for f in [10.0, 45.0, 55.0] {
        assert!((through(f) - 1.0).abs() < 0.1, "{f} Hz");
    }
    let zero = notch_filter(&rec(128.0, vec![0.0; 500]), 50.0, 30.0).unwrap();
    assert!(zero.samples.iter().all(|v| *v == 0.0));
    assert!(notch_filter(&rec(128.0, vec![0.0; 500]), 65.0, 30.0).is_err());
}

/// Welch estimate built from an explicit O(n^2) DFT per segment.
fn welch_reference(x: &[f64], rate: f64, seg: usize, overlap: f64) -> Vec<f64> {
    let step = seg - (overlap * seg as f64).floor() as usize;
    let w: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
    let wss: f64 = w.iter().map(|v| v * v).sum();
    let nb = seg / 2 + 1;
    let mut out = vec![0.0; nb];
    let mut count = 0;
    let mut s = 0;
    while s + seg <= x.len() {
        let mean: f64 = x[s..s + seg].iter().sum::<f64>() / seg as f64;
        for (k, o) in out.iter_mut().enumerate() {
            let (mut re, mut im) = (0.0, 0.0);
            for i in 0..seg {
                let v = (x[s + i] - mean) * w[i];
                let ang = -2.0 * PI * (k * i) as f64 / seg as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let mut p = (re * re + im * im) / (rate * wss);
            if k != 0 && !(seg % 2 == 0 && k == seg / 2) {
                p *= 2.0;
            }
            *o += p;
        }
        count += 1;
        s += step;
    }
    out.iter().map(|v| v / count as f64).collect()
}

#[test]
fn welch_matches_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let seg = rng.gen_range(8..48);
        let len = rng.gen_range(seg..4 * seg);
        let overlap = [0.0, 0.25, 0.5, 0.75][rng.gen_range(0..4)];
        let x: Vec<f64> = (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ps = welch_psd(&x, 128.0, seg, overlap).unwrap();
        let reference = welch_reference(&x, 128.0, seg, overlap);
        for (a, b) in ps.psd.iter().zip(&reference) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
    for (a, b) in hann(4).iter().zip([0.0, 0.5, 1.0, 0.5]) {
        assert!((a - b).abs() < 1e-15);
    }
}

#[test]
fn welch_white_noise_integrates_to_variance() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x: Vec<f64> = (0..2560).map(|_| rng.sample(StandardNormal)).collect();
        let ps = welch_psd(&x, 128.0, 512, 0.5).unwrap();
        let total = band_power(&ps, 0.0, 64.0).unwrap();
        assert!((total - 1.0).abs() < 0.1, "seed {seed}: {total}");
    }
}

#[test]
fn welch_two_tones_give_two_peaks() {
    let x: Vec<f64> = sine(2.0, 128.0, 2560).iter().zip(sine(25.0, 128.0, 2560)).map(|(a, b)| a + b).collect();
    let ps = welch_psd(&x, 128.0, 512, 0.5).unwrap();
    let peaks: Vec<f64> = (1..ps.psd.len() - 1)
        .filter(|&k| ps.psd[k] > ps.psd[k - 1] && ps.psd[k] > ps.psd[k + 1] && ps.psd[k] > 0.01)
        .map(|k| ps.freqs_hz[k])
        .collect();
    assert_eq!(peaks, vec![2.0, 25.0]);
}

#[test]
fn welch_scales_quadratically() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let x: Vec<f64> = (0..1024).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let a = 3.5;
    let p1 = welch_psd(&x, 128.0, 256, 0.5).unwrap();
    let xs: Vec<f64> = x.iter().map(|v| v * a).collect();
    let p2 = welch_psd(&xs, 128.0, 256, 0.5).unwrap();
    for (u, v) in p1.psd.iter().zip(&p2.psd) {
        assert!((v - a * a * u).abs() <= 1e-12 * v.abs().max(1.0));
    }
}

#[test]
fn epochs_tile_the_recording() {
    let n = 128 * 95;
    let r = rec(128.0, (0..n).map(|i| ((i * 37) % 101) as f64).collect());
    let eps = segment_epochs(&r, EPOCH_S);
    let raw = raw_epochs(&r, EPOCH_S);
    assert_eq!(eps.len(), 4);
    let joined: Vec<f64> = raw.concat();
    assert_eq!(&joined[..], &r.samples[..4 * EPOCH_LEN]);
    for (i, e) in eps.iter().enumerate() {
        assert_eq!(e.epoch_index, i);
        assert_eq!(e.values.len(), EPOCH_LEN);
    }
}

#[test]
fn raw_format_file_roundtrip_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut r = rec(250.0, (0..5000).map(|_| rng.gen_range(-300.0..300.0)).collect());
    r.start_offset_s = 20.0;
    let p1 = dir.path().join("a.json");
    write_raw(&r, &p1, 0.1).unwrap();
    let back = read_raw(&p1).unwrap();
    let p2 = dir.path().join("b.json");
    write_raw(&back, &p2, 0.1).unwrap();
    assert_eq!(std::fs::read(p1.with_extension("f32")).unwrap(), std::fs::read(p2.with_extension("f32")).unwrap());
    assert_eq!(read_raw(&p2).unwrap().samples, back.samples);
    assert_eq!(back.start_offset_s, 20.0);
    let (side, _) = encode_raw(&back, 0.1).unwrap();
    assert_eq!((side.n_samples, side.rate_hz), (5000, 250.0));
}

#[test]
fn csv_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let r = rec(250.0, vec![1.25, -2.5, 3.0, 0.0, 12.5]);
    let p = dir.path().join("night.csv");
    write_csv(&r, &p).unwrap();
    let back = read_csv(&p).unwrap();
    assert_eq!(back.samples, r.samples);
    assert_eq!(back.rate_hz, 250.0);
    assert_eq!(back.id, "night");
}

#[test]
fn csv_missing_column_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "time,value\n0,1\n").unwrap();
    assert!(read_csv(&p).is_err());
}
