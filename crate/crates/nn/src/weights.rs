//! Binary weight container.
//!
//! Layout: the 8-byte magic `EEGARTW1`, a little-endian `u64` manifest
//! length, the JSON manifest, then one little-endian `f32` blob per tensor
//! in manifest order. Each manifest entry records the blob's byte offset
//! (relative to the end of the manifest), its length, and the SHA-256 of its
//! bytes.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{NnError, Result};
use crate::params::{ParamKind, ParamSet};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 8] = b"EEGARTW1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub group: String,
    pub kind: ParamKind,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub byte_len: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub model_kind: String,
    pub layers: serde_json::Value,
    pub rng_seed: u64,
    /// Free-form metadata such as the stored operating threshold.
    pub metadata: serde_json::Value,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightFile {
    pub manifest: Manifest,
    pub data: Vec<Vec<f32>>,
}

fn digest(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn to_le(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl WeightFile {
    /// Captures every entry of `params` (weights and buffers) as `f32`.
    pub fn from_params(
        model_kind: &str,
        layers: serde_json::Value,
        rng_seed: u64,
        metadata: serde_json::Value,
        params: &ParamSet,
    ) -> Self {
        let mut tensors = Vec::with_capacity(params.len());
        let mut data = Vec::with_capacity(params.len());
        let mut offset = 0u64;
        for e in params.entries() {
            let values: Vec<f32> = e.value.data().iter().map(|&v| v as f32).collect();
            let bytes = to_le(&values);
            tensors.push(TensorRecord {
                name: e.name.clone(),
                group: e.group.clone(),
                kind: e.kind,
                shape: e.value.shape().to_vec(),
                offset,
                byte_len: bytes.len() as u64,
                sha256: digest(&bytes),
            });
            offset += bytes.len() as u64;
            data.push(values);
        }
        Self {
            manifest: Manifest {
                format_version: FORMAT_VERSION,
                model_kind: model_kind.to_string(),
                layers,
                rng_seed,
                metadata,
                tensors,
            },
            data,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let manifest = serde_json::to_vec(&self.manifest)?;
        let mut out = Vec::with_capacity(16 + manifest.len() + self.data.iter().map(|d| d.len() * 4).sum::<usize>());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
        out.extend_from_slice(&manifest);
        for d in &self.data {
            out.extend_from_slice(&to_le(d));
        }
        Ok(out)
    }

    /// Parses and verifies a container: magic, format version, blob bounds,
    /// shapes, and every checksum.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 || &bytes[..8] != MAGIC {
            return Err(NnError::Format("not a weight file (bad magic)".into()));
        }
        let mlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
        let body_start = 16usize
            .checked_add(mlen)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| NnError::Format("manifest length exceeds file size".into()))?;
        let manifest: Manifest = serde_json::from_slice(&bytes[16..body_start])?;
        if manifest.format_version != FORMAT_VERSION {
            return Err(NnError::Format(format!(
                "format version {} is not supported (expected {FORMAT_VERSION})",
                manifest.format_version
            )));
        }
        let body = &bytes[body_start..];
        let mut data = Vec::with_capacity(manifest.tensors.len());
        let mut expected_offset = 0u64;
        for t in &manifest.tensors {
            let n: usize = t.shape.iter().product();
            if t.byte_len != 4 * n as u64 || t.offset != expected_offset {
                return Err(NnError::Format(format!("inconsistent layout for `{}`", t.name)));
            }
            let start = t.offset as usize;
            let end = start + t.byte_len as usize;
            let blob = body
                .get(start..end)
                .ok_or_else(|| NnError::Format(format!("blob for `{}` is truncated", t.name)))?;
            if digest(blob) != t.sha256 {
                return Err(NnError::Checksum(t.name.clone()));
            }
            data.push(
                blob.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                    .collect(),
            );
            expected_offset = end as u64;
        }
        if expected_offset as usize != body.len() {
            return Err(NnError::Format("trailing bytes after the last blob".into()));
        }
        Ok(Self { manifest, data })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }

    /// Copies stored tensors into `params`, matching by name and shape.
    pub fn load_into(&self, params: &mut ParamSet) -> Result<()> {
        if self.manifest.tensors.len() != params.len() {
            return Err(NnError::Format(format!(
                "file holds {} tensors, model has {}",
                self.manifest.tensors.len(),
                params.len()
            )));
        }
        for (rec, values) in self.manifest.tensors.iter().zip(&self.data) {
            let id = params
                .find(&rec.name)
                .ok_or_else(|| NnError::Format(format!("model has no parameter `{}`", rec.name)))?;
            let t = params.get_mut(id);
            if t.shape() != rec.shape.as_slice() {
                return Err(NnError::Format(format!(
                    "shape of `{}`: file {:?}, model {:?}",
                    rec.name,
                    rec.shape,
                    t.shape()
                )));
            }
            *t = Tensor::new(rec.shape.clone(), values.iter().map(|&v| v as f64).collect())?;
        }
        Ok(())
    }
}
