//! Training trace directory: `config.json`, `loss.csv` and
//! `checkpoints/epoch_{m:04}.fmck`.

use std::path::{Path, PathBuf};

use fmce_core::nn::{Executor, ModelGraph, OptimizerConfig, OptimizerKind};
use fmce_core::original_task::{
    generate_dataset_with_noise, train_original, OriginalTrainConfig, SyntheticDataset, TrainError,
};
use fmce_core::LossSeries;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::{checkpoint, loss_log, read_json, write_json};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerSnapshot {
    Sgd { learning_rate: f32 },
    Adam { learning_rate: f32, beta1: f32, beta2: f32, epsilon: f32 },
}

impl From<OptimizerConfig> for OptimizerSnapshot {
    fn from(c: OptimizerConfig) -> Self {
        match c.kind {
            OptimizerKind::Sgd => OptimizerSnapshot::Sgd { learning_rate: c.learning_rate },
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                OptimizerSnapshot::Adam { learning_rate: c.learning_rate, beta1, beta2, epsilon }
            }
        }
    }
}

impl From<OptimizerSnapshot> for OptimizerConfig {
    fn from(s: OptimizerSnapshot) -> Self {
        match s {
            OptimizerSnapshot::Sgd { learning_rate } => OptimizerConfig { kind: OptimizerKind::Sgd, learning_rate },
            OptimizerSnapshot::Adam { learning_rate, beta1, beta2, epsilon } => {
                OptimizerConfig { kind: OptimizerKind::Adam { beta1, beta2, epsilon }, learning_rate }
            }
        }
    }
}

/// Everything needed to regenerate the data and repeat the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceConfig {
    pub data_seed: u64,
    pub n_per_class: usize,
    pub noise_sigma: f32,
    pub train_seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSnapshot,
}

impl TraceConfig {
    pub fn train_config(&self) -> OriginalTrainConfig {
        OriginalTrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: self.optimizer.into(),
            seed: self.train_seed,
        }
    }

    pub fn dataset(&self) -> Result<SyntheticDataset> {
        Ok(generate_dataset_with_noise(self.data_seed, self.n_per_class, self.noise_sigma)?)
    }
}

pub struct Trace {
    root: PathBuf,
}

impl Trace {
    pub fn open(root: &Path) -> Self {
        Self { root: root.to_path_buf() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config_path(&self) -> PathBuf {
        self.root.join("config.json")
    }

    pub fn loss_path(&self) -> PathBuf {
        self.root.join("loss.csv")
    }

    pub fn checkpoint_path(&self, epoch: usize) -> PathBuf {
        self.root.join("checkpoints").join(format!("epoch_{epoch:04}.fmck"))
    }

    pub fn config(&self) -> Result<TraceConfig> {
        read_json(&self.config_path())
    }

    /// SHA-256 of `config.json` as stored.
    pub fn config_digest(&self) -> Result<String> {
        let p = self.config_path();
        Ok(crate::sha256_hex(&std::fs::read(&p).map_err(Error::io(&p))?))
    }

    pub fn losses(&self) -> Result<LossSeries> {
        loss_log::read(&self.loss_path())
    }

    pub fn load_checkpoint(&self, epoch: usize) -> Result<ModelGraph> {
        checkpoint::load(&self.checkpoint_path(epoch))
    }
}

/// Generates the data, trains and records the full trace under `root`.
pub fn record<E: Executor>(root: &Path, cfg: &TraceConfig, exec: &E) -> Result<(SyntheticDataset, Vec<f64>)> {
    let data = cfg.dataset()?;
    record_with(root, cfg, &data, exec).map(|losses| (data, losses))
}

pub fn record_with<E: Executor>(root: &Path, cfg: &TraceConfig, data: &SyntheticDataset, exec: &E) -> Result<Vec<f64>> {
    let trace = Trace::open(root);
    let dir = root.join("checkpoints");
    std::fs::create_dir_all(&dir).map_err(Error::io(&dir))?;
    write_json(&trace.config_path(), cfg)?;
    let (_, losses) = train_original(data, &cfg.train_config(), exec, |epoch, _, graph| {
        checkpoint::save(&trace.checkpoint_path(epoch), graph)
    })
    .map_err(|e| match e {
        TrainError::Task(t) => Error::Task(t),
        TrainError::Callback(e) => e,
    })?;
    loss_log::write(&trace.loss_path(), &losses)?;
    Ok(losses)
}
