//! `.fmcs` dataset files and their JSON manifest.
//!
//! Little-endian: `"FMCS"`, version `u32`, `K` `u32`, sample count `u64`,
//! `C, H, W` as `u32`, then per sample the label `u8`, source index `u32`,
//! marker epoch `u32` and `C·H·W` `f32` values. A CRC-64/XZ of every preceding
//! byte closes the file.

use std::path::Path;

use crc::{Crc, CRC_64_XZ};
use fmce_core::fmcs::{FmcsDataset, FmcsSample};
use fmce_core::nn::Dims;
use serde::{Deserialize, Serialize};

use crate::binio::{Reader, Writer};
use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"FMCS";
pub const VERSION: u32 = 1;

const CRC64: Crc<u64> = Crc::<u64>::new(&CRC_64_XZ);

pub fn encode(dataset: &FmcsDataset) -> Result<Vec<u8>, FormatError> {
    if dataset.is_empty() {
        return Err(FormatError::EmptyDataset);
    }
    let d = dataset.dims();
    let mut w = Writer::default();
    w.bytes(&MAGIC);
    w.u32(VERSION);
    w.usize32(dataset.k())?;
    w.u64(dataset.len() as u64);
    for v in [d.c, d.h, d.w] {
        w.usize32(v)?;
    }
    for s in dataset.samples() {
        w.u8(s.label);
        w.u32(s.source_index);
        w.u32(s.marker_epoch);
        w.f32s(&s.features);
    }
    let crc = CRC64.checksum(&w.buf);
    w.u64(crc);
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<FmcsDataset, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let k = r.usize32()?;
    let count = r.u64()?;
    let dims = Dims::new(r.usize32()?, r.usize32()?, r.usize32()?);
    let record = 9 + dims.len() * 4;
    let body = usize::try_from(count).ok().and_then(|c| c.checked_mul(record)).ok_or(FormatError::Truncated)?;
    if r.remaining() < body + 8 {
        return Err(FormatError::Truncated);
    }
    if r.remaining() > body + 8 {
        return Err(FormatError::TrailingBytes(r.remaining() - body - 8));
    }
    let computed = CRC64.checksum(&bytes[..bytes.len() - 8]);
    let mut samples = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let label = r.u8()?;
        let source_index = r.u32()?;
        let marker_epoch = r.u32()?;
        let features = r.f32s(dims.len())?;
        samples.push(FmcsSample { features, label, source_index, marker_epoch });
    }
    let stored = r.u64()?;
    if stored != computed {
        return Err(FormatError::Checksum { stored, computed });
    }
    r.finish()?;
    if samples.is_empty() {
        return Err(FormatError::EmptyDataset);
    }
    FmcsDataset::new(k, dims, samples).map_err(|e| FormatError::Invalid(e.to_string()))
}

/// Writes the dataset and returns the SHA-256 of the file bytes.
pub fn save(path: &Path, dataset: &FmcsDataset) -> Result<String> {
    let bytes = encode(dataset).map_err(Error::format(path))?;
    std::fs::write(path, &bytes).map_err(Error::io(path))?;
    Ok(crate::sha256_hex(&bytes))
}

pub fn load(path: &Path) -> Result<FmcsDataset> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(Error::format(path))
}

/// Provenance written next to a `.fmcs` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub k: usize,
    pub dims: [usize; 3],
    pub samples: usize,
    pub label_counts: Vec<usize>,
    pub baseline_epoch: usize,
    pub convergence_epoch: usize,
    pub markers: Vec<usize>,
    /// SHA-256 of the trace's `config.json`.
    pub trace_config_digest: String,
    /// SHA-256 of the `.fmcs` file.
    pub content_sha256: String,
}
