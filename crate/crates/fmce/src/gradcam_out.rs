//! Grad-CAM heatmaps as binary PGM files plus a JSON index.

use std::path::Path;

use fmce_core::fmce::FmceModel;
use fmce_core::fmcs::FmcsDataset;
use fmce_core::nn::Sequential;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::write_json;

/// `P5` graymap with maxval 255; values are clamped to `[0, 1]` and rounded.
pub fn encode_pgm(width: usize, height: usize, values: &[f32]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(values.iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8));
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatmapEntry {
    pub sample: usize,
    pub label: u8,
    pub target: usize,
    pub predicted: usize,
    pub file: String,
    pub height: usize,
    pub width: usize,
    pub heatmap: Vec<f32>,
}

/// Writes one PGM per sample into `dir` and an `index.json`. `target` of
/// `None` explains each sample's own label.
pub fn write_heatmaps(
    dir: &Path,
    model: &FmceModel,
    dataset: &FmcsDataset,
    samples: &[usize],
    target: Option<usize>,
) -> Result<Vec<HeatmapEntry>> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let mut entries = Vec::with_capacity(samples.len());
    for &i in samples {
        let s = dataset
            .samples()
            .get(i)
            .ok_or_else(|| Error::Invalid(format!("sample {i} out of range (dataset has {})", dataset.len())))?;
        let t = target.unwrap_or(s.label as usize);
        let cam = model.grad_cam(&s.features, t)?;
        let predicted = model.predict(&Sequential, &dataset.features(&[i]))?[0];
        let file = format!("sample_{i:06}_target_{t}.pgm");
        let path = dir.join(&file);
        std::fs::write(&path, encode_pgm(cam.dims.w, cam.dims.h, &cam.heatmap)).map_err(Error::io(&path))?;
        entries.push(HeatmapEntry {
            sample: i,
            label: s.label,
            target: t,
            predicted,
            file,
            height: cam.dims.h,
            width: cam.dims.w,
            heatmap: cam.heatmap,
        });
    }
    write_json(&dir.join("index.json"), &entries)?;
    Ok(entries)
}
