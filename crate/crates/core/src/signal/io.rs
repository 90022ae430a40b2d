//! Recording ingestion: headered CSV (`t_s,uv`) and a raw format made of a
//! JSON sidecar plus a little-endian f32 sample blob.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::recording::Recording;
use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawSidecar {
    pub id: String,
    pub rate_hz: f64,
    pub n_samples: usize,
    /// Microvolts per stored unit.
    pub scale_uv: f64,
    #[serde(default)]
    pub start_offset_s: f64,
}

/// Blob path belonging to a sidecar path.
pub fn blob_path(sidecar: &Path) -> PathBuf {
    sidecar.with_extension("f32")
}

pub fn encode_raw(rec: &Recording, scale_uv: f64) -> Result<(RawSidecar, Vec<u8>)> {
    if !(scale_uv > 0.0 && scale_uv.is_finite()) {
        return Err(CoreError::InvalidArgument(format!("scale_uv {scale_uv}")));
    }
    let mut blob = Vec::with_capacity(rec.samples.len() * 4);
    for v in &rec.samples {
        blob.extend_from_slice(&((v / scale_uv) as f32).to_le_bytes());
    }
    let side = RawSidecar {
        id: rec.id.clone(),
        rate_hz: rec.rate_hz,
        n_samples: rec.samples.len(),
        scale_uv,
        start_offset_s: rec.start_offset_s,
    };
    Ok((side, blob))
}

pub fn decode_raw(side: &RawSidecar, blob: &[u8]) -> Result<Recording> {
    if blob.len() != side.n_samples * 4 {
        return Err(CoreError::Format(format!(
            "blob holds {} bytes, sidecar promises {} samples",
            blob.len(),
            side.n_samples
        )));
    }
    let samples = blob
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64 * side.scale_uv)
        .collect();
    let mut rec = Recording::new(side.id.clone(), side.rate_hz, samples)?;
    rec.start_offset_s = side.start_offset_s;
    Ok(rec)
}

/// Writes `<sidecar>` and its `.f32` blob; returns the sidecar path.
pub fn write_raw(rec: &Recording, sidecar: &Path, scale_uv: f64) -> Result<PathBuf> {
    let (side, blob) = encode_raw(rec, scale_uv)?;
    fs::write(sidecar, serde_json::to_vec_pretty(&side)?)?;
    fs::write(blob_path(sidecar), blob)?;
    Ok(sidecar.to_path_buf())
}

pub fn read_raw(sidecar: &Path) -> Result<Recording> {
    let side: RawSidecar = serde_json::from_slice(&fs::read(sidecar)?)?;
    let blob = fs::read(blob_path(sidecar))?;
    decode_raw(&side, &blob)
}

pub fn write_csv(rec: &Recording, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["t_s", "uv"])?;
    for (i, v) in rec.samples.iter().enumerate() {
        w.write_record([(i as f64 / rec.rate_hz).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `t_s,uv` CSV. The rate is taken from the first and last
/// timestamps; the id is the file stem.
pub fn read_csv(path: &Path) -> Result<Recording> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    let ti = headers.iter().position(|h| h.trim() == "t_s");
    let ui = headers.iter().position(|h| h.trim() == "uv");
    let (Some(ti), Some(ui)) = (ti, ui) else {
        return Err(CoreError::Format("CSV needs `t_s` and `uv` columns".into()));
    };
    let mut t = Vec::new();
    let mut uv = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let parse = |i: usize| -> Result<f64> {
            row.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| CoreError::Format(format!("bad number on data row {}", line + 1)))
        };
        t.push(parse(ti)?);
        uv.push(parse(ui)?);
    }
    if uv.is_empty() {
        return Err(CoreError::EmptyRecording);
    }
    if uv.len() < 2 {
        return Err(CoreError::Format("need at least two samples to infer the rate".into()));
    }
    let span = t[t.len() - 1] - t[0];
    if !(span > 0.0) {
        return Err(CoreError::Format("timestamps must increase".into()));
    }
    let rate = ((uv.len() - 1) as f64 / span * 1e3).round() / 1e3;
    let id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "recording".into());
    let mut rec = Recording::new(id, rate, uv)?;
    rec.start_offset_s = t[0].max(0.0);
    Ok(rec)
}

/// Loads a recording by extension: `.csv` or a raw sidecar `.json`.
pub fn read_recording(path: &Path) -> Result<Recording> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("csv") => read_csv(path),
        Some("json") => read_raw(path),
        _ => Err(CoreError::Format(format!(
            "unknown recording format: {}",
            path.display()
        ))),
    }
}
