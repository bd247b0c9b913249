//! File formats, training traces, the desk-scale pipeline and the `fmce` CLI
//! on top of [`fmce_core`].

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;
use sha2::{Digest, Sha256};

pub mod analysis;
mod binio;
pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod exec;
pub mod fmcs_file;
pub mod gradcam_out;
pub mod loss_log;
pub mod model_io;
pub mod pipeline;
pub mod trace;

pub use error::{Error, FormatError, Result, Stage};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(Error::json(path))?;
    bytes.push(b'\n');
    std::fs::write(path, bytes).map_err(Error::io(path))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    serde_json::from_slice(&bytes).map_err(Error::json(path))
}
