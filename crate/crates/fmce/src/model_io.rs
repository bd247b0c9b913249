//! FMCE-Net persistence: `model.fmck` holds the weights, `model.json` the
//! architecture settings, normalisation statistics and training settings.

use std::path::Path;

use fmce_core::fmce::{build_fmce, FeatureNormalizer, FmceConfig, FmceModel};
use fmce_core::metrics::EvalMetrics;
use fmce_core::nn::Dims;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trace::OptimizerSnapshot;
use crate::{checkpoint, read_json, write_json};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizerStats {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSnapshot,
    pub seed: u64,
    pub split_seed: u64,
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub k: usize,
    pub input: [usize; 3],
    pub channel_budget: usize,
    pub allow_single_stage: bool,
    pub stages: usize,
    pub reducer: bool,
    pub bottleneck: [usize; 3],
    pub normalizer: Option<NormalizerStats>,
    pub training: TrainingSettings,
    /// SHA-256 of the `.fmcs` file the model was trained on.
    pub dataset_sha256: String,
}

pub fn dims3(d: Dims) -> [usize; 3] {
    [d.c, d.h, d.w]
}

pub fn meta_for(model: &FmceModel, cfg: &FmceConfig, training: TrainingSettings, dataset_sha256: &str) -> ModelMeta {
    let a = model.architecture();
    ModelMeta {
        k: a.k,
        input: dims3(a.input),
        channel_budget: cfg.channel_budget,
        allow_single_stage: cfg.allow_single_stage,
        stages: a.stages,
        reducer: a.reducer,
        bottleneck: dims3(a.bottleneck),
        normalizer: model.normalizer().map(|n| NormalizerStats { mean: n.mean.clone(), std: n.std.clone() }),
        training,
        dataset_sha256: dataset_sha256.to_string(),
    }
}

pub fn save(dir: &Path, model: &FmceModel, meta: &ModelMeta) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    checkpoint::save(&dir.join("model.fmck"), model.graph())?;
    write_json(&dir.join("model.json"), meta)
}

pub fn load(dir: &Path) -> Result<(FmceModel, ModelMeta)> {
    let meta: ModelMeta = read_json(&dir.join("model.json"))?;
    let graph = checkpoint::load(&dir.join("model.fmck"))?;
    let [c, h, w] = meta.input;
    let cfg = FmceConfig { channel_budget: meta.channel_budget, allow_single_stage: meta.allow_single_stage };
    let arch = build_fmce(Dims::new(c, h, w), meta.k, &cfg)?;
    if arch.layers != graph.layers() {
        return Err(Error::Invalid(format!("{}: weights do not match model.json", dir.display())));
    }
    let normalizer = meta.normalizer.as_ref().map(|n| FeatureNormalizer { mean: n.mean.clone(), std: n.std.clone() });
    Ok((FmceModel::new(arch, graph, normalizer)?, meta))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub averaging: String,
    /// `confusion[true][predicted]`, scores in ascending order.
    pub confusion: Vec<Vec<u64>>,
    pub k: usize,
    pub samples: u64,
    pub split: String,
    pub split_seed: u64,
    pub seed: u64,
    pub dataset_sha256: String,
}

impl MetricsReport {
    pub fn new(m: &EvalMetrics, split: &str, meta: &ModelMeta, dataset_sha256: &str) -> Self {
        Self {
            accuracy: m.accuracy,
            precision: m.precision,
            recall: m.recall,
            f1: m.f1,
            averaging: "macro".into(),
            confusion: m.confusion.clone(),
            k: m.k(),
            samples: m.total(),
            split: split.to_string(),
            split_seed: meta.training.split_seed,
            seed: meta.training.seed,
            dataset_sha256: dataset_sha256.to_string(),
        }
    }
}
