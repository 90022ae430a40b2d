//! Minimal SVG line plots.

use std::fmt::Write;

use super::localization::Interval;
use super::roc::RocPoint;
use crate::attention::AttentionMap;
use crate::signal::{Label, EPOCH_S, WINDOWS_PER_EPOCH, WINDOW_S};

const W: f64 = 480.0;
const H: f64 = 360.0;
const M: f64 = 40.0;
const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

fn header(out: &mut String, w: f64, h: f64) {
    let _ = write!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">"#
    );
    let _ = write!(out, r#"<rect width="{w}" height="{h}" fill="white"/>"#);
}

fn polyline(out: &mut String, pts: &[(f64, f64)], color: &str) {
    let coords: Vec<String> = pts.iter().map(|(x, y)| format!("{x:.2},{y:.2}")).collect();
    let _ = write!(
        out,
        r#"<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{}"/>"#,
        coords.join(" ")
    );
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// ROC curves in (1 - sp, se) space, one line per named curve.
pub fn roc_svg(curves: &[(&str, &[RocPoint])]) -> String {
    let pw = W - 2.0 * M;
    let ph = H - 2.0 * M;
    let mut out = String::new();
    header(&mut out, W, H);
    let _ = write!(out, r#"<rect x="{M}" y="{M}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#);
    polyline(&mut out, &[(M, M + ph), (M + pw, M)], "#bbbbbb");
    for (k, (name, points)) in curves.iter().enumerate() {
        let mut xy: Vec<(f64, f64)> = points.iter().map(|p| (1.0 - p.sp, p.se)).collect();
        xy.push((0.0, 0.0));
        xy.push((1.0, 1.0));
        xy.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let pts: Vec<(f64, f64)> = xy.iter().map(|(x, y)| (M + x * pw, M + (1.0 - y) * ph)).collect();
        let color = COLORS[k % COLORS.len()];
        polyline(&mut out, &pts, color);
        let _ = write!(
            out,
            r#"<text x="{}" y="{}" fill="{color}">{}</text>"#,
            M + pw - 150.0,
            M + ph - 10.0 - 14.0 * k as f64,
            escape(name)
        );
    }
    let _ = write!(out, r#"<text x="{}" y="{}" text-anchor="middle">1 - specificity</text>"#, M + pw / 2.0, H - 10.0);
    let _ = write!(
        out,
        r#"<text x="12" y="{}" transform="rotate(-90 12 {})" text-anchor="middle">sensitivity</text>"#,
        M + ph / 2.0,
        M + ph / 2.0
    );
    out.push_str("</svg>\n");
    out
}

/// One epoch: the trace on top, the attention map below, labeled artifact
/// windows shaded grey and localized intervals shaded red.
pub fn attention_svg(
    trace: &[f64],
    map: &AttentionMap,
    intervals: &[Interval],
    window_labels: &[Label; WINDOWS_PER_EPOCH],
    threshold: f64,
) -> String {
    let w = 720.0;
    let h = 320.0;
    let pw = w - 2.0 * M;
    let band = (h - 3.0 * M) / 2.0;
    let sx = |t: f64| M + t / EPOCH_S * pw;
    let mut out = String::new();
    header(&mut out, w, h);
    for (k, l) in window_labels.iter().enumerate() {
        if *l == Label::Artifact {
            let x0 = sx(k as f64 * WINDOW_S);
            let _ = write!(
                out,
                r##"<rect x="{x0:.2}" y="{M}" width="{:.2}" height="{:.2}" fill="#dddddd"/>"##,
                sx(WINDOW_S) - M,
                2.0 * band + M
            );
        }
    }
    for &(s, e) in intervals {
        let _ = write!(
            out,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{band:.2}" fill="#d62728" fill-opacity="0.3"/>"##,
            sx(s),
            2.0 * M + band,
            sx(e) - sx(s)
        );
    }
    for k in 0..=WINDOWS_PER_EPOCH {
        let x = sx(k as f64 * WINDOW_S);
        let _ = write!(out, r##"<line x1="{x:.2}" y1="{M}" x2="{x:.2}" y2="{:.2}" stroke="#999999" stroke-dasharray="3,3"/>"##, h - M);
    }
    if !trace.is_empty() {
        let (lo, hi) = trace.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        let span = if hi > lo { hi - lo } else { 1.0 };
        let n = trace.len() as f64;
        let pts: Vec<(f64, f64)> = trace
            .iter()
            .enumerate()
            .map(|(i, &v)| (sx(i as f64 / n * EPOCH_S), M + band - (v - lo) / span * band))
            .collect();
        polyline(&mut out, &pts, "#333333");
    }
    let dt = map.time_scale_s_per_step;
    let top = 2.0 * M + band;
    let pts: Vec<(f64, f64)> = map
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| (sx((i as f64 + 0.5) * dt), top + band - v.clamp(0.0, 1.0) * band))
        .collect();
    polyline(&mut out, &pts, "#1f77b4");
    let ty = top + band - threshold.clamp(0.0, 1.0) * band;
    let _ = write!(
        out,
        r##"<line x1="{M}" y1="{ty:.2}" x2="{:.2}" y2="{ty:.2}" stroke="#d62728" stroke-dasharray="4,2"/>"##,
        M + pw
    );
    let _ = write!(
        out,
        r#"<text x="{M}" y="{}">epoch {} (threshold {threshold:.2})</text>"#,
        M - 10.0,
        map.epoch_index
    );
    out.push_str("</svg>\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roc_svg_is_well_formed() {
        let pts = [RocPoint { threshold: 0.5, se: 0.8, sp: 0.9 }];
        let s = roc_svg(&[("a<b", &pts)]);
        assert!(s.starts_with("<svg") && s.trim_end().ends_with("</svg>"));
        assert!(s.contains("a&lt;b"));
        assert_eq!(s.matches("<polyline").count(), 2);
    }
}
