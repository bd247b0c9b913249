//! `.fmck` model checkpoints.
//!
//! Little-endian: `"FMCK"`, version `u32`, layer count `u32`, input `c, h, w`
//! as `u32`, initialisation seed `u64`, then per layer a kind tag `u8`, its
//! shape fields as `u32` and, for parametric layers, the weights followed by
//! the biases as `f32`.

use std::path::Path;

use fmce_core::nn::{Dims, LayerSpec, ModelGraph, PadMode, Params};

use crate::binio::{Reader, Writer};
use crate::error::{Error, FormatError, Result};

pub const MAGIC: [u8; 4] = *b"FMCK";
pub const VERSION: u32 = 1;

const TAG_CONV: u8 = 0;
const TAG_MAXPOOL: u8 = 1;
const TAG_RELU: u8 = 2;
const TAG_GAP: u8 = 3;
const TAG_FC: u8 = 4;
const TAG_SOFTMAX: u8 = 5;

pub fn encode(model: &ModelGraph) -> Result<Vec<u8>, FormatError> {
    let mut w = Writer::default();
    w.bytes(&MAGIC);
    w.u32(VERSION);
    w.usize32(model.layers().len())?;
    let d = model.input_dims();
    for v in [d.c, d.h, d.w] {
        w.usize32(v)?;
    }
    w.u64(model.rng_seed());
    for (layer, params) in model.layers().iter().zip(model.params()) {
        match *layer {
            LayerSpec::Conv3x3 { in_channels, out_channels, padding, pad_mode } => {
                w.u8(TAG_CONV);
                for v in [in_channels, out_channels, padding] {
                    w.usize32(v)?;
                }
                w.u32(match pad_mode {
                    PadMode::Zero => 0,
                    PadMode::Replicate => 1,
                });
            }
            LayerSpec::MaxPool2x2 => w.u8(TAG_MAXPOOL),
            LayerSpec::Relu => w.u8(TAG_RELU),
            LayerSpec::GlobalAvgPool => w.u8(TAG_GAP),
            LayerSpec::FullyConnected { in_features, out_features } => {
                w.u8(TAG_FC);
                w.usize32(in_features)?;
                w.usize32(out_features)?;
            }
            LayerSpec::Softmax => w.u8(TAG_SOFTMAX),
        }
        if let Some(p) = params {
            w.f32s(&p.weight);
            w.f32s(&p.bias);
        }
    }
    Ok(w.buf)
}

pub fn decode(bytes: &[u8]) -> Result<ModelGraph, FormatError> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let count = r.usize32()?;
    let input = Dims::new(r.usize32()?, r.usize32()?, r.usize32()?);
    let seed = r.u64()?;
    let mut layers = Vec::new();
    let mut params = Vec::new();
    for _ in 0..count {
        let layer = match r.u8()? {
            TAG_CONV => {
                let (in_channels, out_channels, padding) = (r.usize32()?, r.usize32()?, r.usize32()?);
                let pad_mode = match r.u32()? {
                    0 => PadMode::Zero,
                    1 => PadMode::Replicate,
                    m => return Err(FormatError::Invalid(format!("unknown padding mode {m}"))),
                };
                LayerSpec::Conv3x3 { in_channels, out_channels, padding, pad_mode }
            }
            TAG_MAXPOOL => LayerSpec::MaxPool2x2,
            TAG_RELU => LayerSpec::Relu,
            TAG_GAP => LayerSpec::GlobalAvgPool,
            TAG_FC => LayerSpec::FullyConnected { in_features: r.usize32()?, out_features: r.usize32()? },
            TAG_SOFTMAX => LayerSpec::Softmax,
            t => return Err(FormatError::UnknownLayer(t)),
        };
        params.push(match layer.param_sizes() {
            Some((nw, nb)) => Some(Params { weight: r.f32s(nw)?, bias: r.f32s(nb)? }),
            None => None,
        });
        layers.push(layer);
    }
    r.finish()?;
    ModelGraph::from_parameters(input, layers, params, seed).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn save(path: &Path, model: &ModelGraph) -> Result<()> {
    let bytes = encode(model).map_err(Error::format(path))?;
    std::fs::write(path, bytes).map_err(Error::io(path))
}

pub fn load(path: &Path) -> Result<ModelGraph> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    decode(&bytes).map_err(Error::format(path))
}
