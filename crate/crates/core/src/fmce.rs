//! FMCE-Net: a small CNN that predicts the convergence score of a feature map.

use alloc::vec;
use alloc::vec::Vec;

use crate::fmcs::{FmcsDataset, FmcsSplit};
use crate::metrics::{EvalMetrics, MetricsError};
use crate::nn::{
    ClassifierTrainer, Dims, Executor, LayerSpec, ModelGraph, NnError, OptimizerConfig, Tensor4, TrainConfig,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FmceError {
    #[error("input {0} is too small: need at least 2 channels and a 2x2 grid")]
    InputTooSmall(Dims),
    #[error("input {0} cannot be halved twice (single-stage fallback disabled)")]
    CannotHalveTwice(Dims),
    #[error("K = {0} must be at least 2")]
    InvalidK(usize),
    #[error("channel budget must be at least 2")]
    InvalidBudget,
    #[error("target class {target} outside 1..={k}")]
    TargetOutOfRange { target: usize, k: usize },
    #[error("normalizer has {found} channels, input has {expected}")]
    NormalizerShape { expected: usize, found: usize },
    #[error("model expects {expected} inputs, got {found}")]
    InputShape { expected: Dims, found: Dims },
    #[error("dataset K = {found} differs from the model's K = {expected}")]
    KMismatch { expected: usize, found: usize },
    #[error("split is empty")]
    EmptySplit,
    #[error(transparent)]
    Engine(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FmceConfig {
    /// Inputs with more channels get a leading conv that reduces them to this.
    pub channel_budget: usize,
    /// Build a one-stage net when the input can only be halved once.
    pub allow_single_stage: bool,
}

impl Default for FmceConfig {
    fn default() -> Self {
        Self { channel_budget: 1024, allow_single_stage: false }
    }
}

/// Layer plan derived from the input shape.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FmceArchitecture {
    pub input: Dims,
    pub k: usize,
    pub layers: Vec<LayerSpec>,
    /// Number of conv/maxpool/relu halving stages.
    pub stages: usize,
    pub reducer: bool,
    /// Shape entering the classifier.
    pub bottleneck: Dims,
    /// Index of the last conv layer, the Grad-CAM target.
    pub last_conv: usize,
}

impl FmceArchitecture {
    pub fn instantiate(&self, seed: u64) -> Result<ModelGraph, NnError> {
        ModelGraph::new(self.input, self.layers.clone(), seed)
    }
}

/// Stages are `conv3x3 c→c/2, maxpool2x2, relu`; their count is the number of
/// halvings that bring the smaller spatial side down to 1 or 2, at least two.
/// Channel counts never go below 1.
pub fn build_fmce(input: Dims, k: usize, cfg: &FmceConfig) -> Result<FmceArchitecture, FmceError> {
    if k < 2 {
        return Err(FmceError::InvalidK(k));
    }
    if cfg.channel_budget < 2 {
        return Err(FmceError::InvalidBudget);
    }
    if input.c < 2 || input.h < 2 || input.w < 2 {
        return Err(FmceError::InputTooSmall(input));
    }
    let mut side = input.h.min(input.w);
    let mut halvings = 0;
    while side > 2 {
        side /= 2;
        halvings += 1;
    }
    let mut stages = halvings.max(2);
    // every pool needs at least a 2x2 input
    let feasible = {
        let mut s = input.h.min(input.w);
        let mut n = 0;
        while s >= 2 {
            s /= 2;
            n += 1;
        }
        n
    };
    if feasible < stages {
        if feasible == 1 && cfg.allow_single_stage {
            stages = 1;
        } else {
            return Err(FmceError::CannotHalveTwice(input));
        }
    }

    let mut layers = Vec::new();
    let mut c = input.c;
    let reducer = c > cfg.channel_budget;
    if reducer {
        layers.push(LayerSpec::conv3x3(c, cfg.channel_budget));
        layers.push(LayerSpec::Relu);
        c = cfg.channel_budget;
    }
    let (mut h, mut w) = (input.h, input.w);
    let mut last_conv = 0;
    for _ in 0..stages {
        let out = (c / 2).max(1);
        last_conv = layers.len();
        layers.push(LayerSpec::conv3x3(c, out));
        layers.push(LayerSpec::MaxPool2x2);
        layers.push(LayerSpec::Relu);
        c = out;
        h /= 2;
        w /= 2;
    }
    let bottleneck = Dims::new(c, h, w);
    layers.push(LayerSpec::fully_connected(bottleneck.len(), k));
    layers.push(LayerSpec::Softmax);
    Ok(FmceArchitecture { input, k, layers, stages, reducer, bottleneck, last_conv })
}

/// Per-channel standardisation, fitted on training features.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureNormalizer {
    pub mean: Vec<f32>,
    pub std: Vec<f32>,
}

impl FeatureNormalizer {
    /// Channels whose deviation is below `1e-6` are only centred.
    pub fn fit(features: &Tensor4) -> Self {
        let Dims { c, h, w } = features.dims();
        let plane = h * w;
        let count = (features.n() * plane).max(1) as f64;
        let mut mean = vec![0.0f64; c];
        let mut sq = vec![0.0f64; c];
        for s in 0..features.n() {
            let x = features.sample(s);
            for ch in 0..c {
                for &v in &x[ch * plane..(ch + 1) * plane] {
                    mean[ch] += v as f64;
                }
            }
        }
        for m in mean.iter_mut() {
            *m /= count;
        }
        for s in 0..features.n() {
            let x = features.sample(s);
            for ch in 0..c {
                for &v in &x[ch * plane..(ch + 1) * plane] {
                    let d = v as f64 - mean[ch];
                    sq[ch] += d * d;
                }
            }
        }
        let std = sq
            .iter()
            .map(|&s| {
                let sd = libm::sqrt(s / count);
                if sd < 1e-6 { 1.0 } else { sd as f32 }
            })
            .collect();
        Self { mean: mean.into_iter().map(|m| m as f32).collect(), std }
    }

    pub fn channels(&self) -> usize {
        self.mean.len()
    }

    pub fn apply_sample(&self, dims: Dims, x: &mut [f32]) {
        let plane = dims.h * dims.w;
        for ch in 0..dims.c {
            let (m, s) = (self.mean[ch], self.std[ch]);
            for v in &mut x[ch * plane..(ch + 1) * plane] {
                *v = (*v - m) / s;
            }
        }
    }

    pub fn apply(&self, features: &mut Tensor4) {
        let dims = features.dims();
        for n in 0..features.n() {
            self.apply_sample(dims, features.sample_mut(n));
        }
    }
}

/// Trained (or freshly initialised) FMCE-Net with its input normalisation.
#[derive(Debug, Clone, PartialEq)]
pub struct FmceModel {
    architecture: FmceArchitecture,
    graph: ModelGraph,
    normalizer: Option<FeatureNormalizer>,
}

impl FmceModel {
    pub fn new(
        architecture: FmceArchitecture,
        graph: ModelGraph,
        normalizer: Option<FeatureNormalizer>,
    ) -> Result<Self, FmceError> {
        if graph.input_dims() != architecture.input || graph.layers() != architecture.layers.as_slice() {
            return Err(FmceError::InputShape { expected: architecture.input, found: graph.input_dims() });
        }
        if let Some(n) = &normalizer {
            if n.channels() != architecture.input.c || n.std.len() != n.mean.len() {
                return Err(FmceError::NormalizerShape { expected: architecture.input.c, found: n.channels() });
            }
        }
        Ok(Self { architecture, graph, normalizer })
    }

    pub fn architecture(&self) -> &FmceArchitecture {
        &self.architecture
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn normalizer(&self) -> Option<&FeatureNormalizer> {
        self.normalizer.as_ref()
    }

    pub fn k(&self) -> usize {
        self.architecture.k
    }

    fn prepare(&self, features: &Tensor4) -> Result<Tensor4, FmceError> {
        if features.dims() != self.architecture.input {
            return Err(FmceError::InputShape { expected: self.architecture.input, found: features.dims() });
        }
        let mut x = features.clone();
        if let Some(n) = &self.normalizer {
            n.apply(&mut x);
        }
        Ok(x)
    }

    /// Class probabilities, `(n, K, 1, 1)`.
    pub fn probabilities<E: Executor>(&self, exec: &E, features: &Tensor4) -> Result<Tensor4, FmceError> {
        let x = self.prepare(features)?;
        Ok(self.graph.forward_range_with(exec, 0, self.graph.layers().len(), &x)?)
    }

    /// Predicted scores, 1-based. Ties go to the lower score.
    pub fn predict<E: Executor>(&self, exec: &E, features: &Tensor4) -> Result<Vec<usize>, FmceError> {
        let x = self.prepare(features)?;
        let logits = self.graph.forward_range_with(exec, 0, self.graph.logits_end(), &x)?;
        Ok((0..logits.n())
            .map(|s| {
                let row = logits.sample(s);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best + 1
            })
            .collect())
    }

    /// Grad-CAM over the last conv layer's output grid for one feature map.
    pub fn grad_cam(&self, features: &[f32], target: usize) -> Result<GradCam, FmceError> {
        let k = self.k();
        if target == 0 || target > k {
            return Err(FmceError::TargetOutOfRange { target, k });
        }
        let input = self.architecture.input;
        if features.len() != input.len() {
            return Err(FmceError::Engine(NnError::DataLength {
                shape: [1, input.c, input.h, input.w],
                found: features.len(),
            }));
        }
        let mut x = features.to_vec();
        if let Some(n) = &self.normalizer {
            n.apply_sample(input, &mut x);
        }
        let cut = self.architecture.last_conv + 1;
        let mut head = self.graph.forward_sample_range(0, cut, &x);
        let activation = head.pop().unwrap_or_default();
        let dims = self.graph.layer_dims(self.architecture.last_conv);

        let acts = self.graph.forward_sample_range(cut, self.graph.logits_end(), &activation);
        let mut onehot = vec![0.0f32; k];
        onehot[target - 1] = 1.0;
        let (_, gradient) = self.graph.backward_sample_range(cut, &acts, onehot);

        let plane = dims.h * dims.w;
        let weights: Vec<f32> = (0..dims.c)
            .map(|c| gradient[c * plane..(c + 1) * plane].iter().sum::<f32>() / plane as f32)
            .collect();
        let mut heatmap = vec![0.0f32; plane];
        for (c, &a) in weights.iter().enumerate() {
            for (hm, &v) in heatmap.iter_mut().zip(&activation[c * plane..(c + 1) * plane]) {
                *hm += a * v;
            }
        }
        let mut max = 0.0f32;
        for v in heatmap.iter_mut() {
            *v = v.max(0.0);
            max = max.max(*v);
        }
        if max > 0.0 {
            for v in heatmap.iter_mut() {
                *v /= max;
            }
        }
        Ok(GradCam { dims, activation, gradient, weights, heatmap, target })
    }

    /// Target logit as a function of the last conv output, for checking
    /// [`GradCam::gradient`] numerically.
    pub fn logit_from_activation(&self, activation: &[f32], target: usize) -> Result<f32, FmceError> {
        let k = self.k();
        if target == 0 || target > k {
            return Err(FmceError::TargetOutOfRange { target, k });
        }
        let cut = self.architecture.last_conv + 1;
        let dims = self.graph.layer_dims(self.architecture.last_conv);
        if activation.len() != dims.len() {
            return Err(FmceError::Engine(NnError::DataLength {
                shape: [1, dims.c, dims.h, dims.w],
                found: activation.len(),
            }));
        }
        let acts = self.graph.forward_sample_range(cut, self.graph.logits_end(), activation);
        Ok(acts[acts.len() - 1][target - 1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCam {
    /// Shape of the last conv output.
    pub dims: Dims,
    pub activation: Vec<f32>,
    /// Gradient of the target logit with respect to `activation`.
    pub gradient: Vec<f32>,
    /// Spatial mean of `gradient` per channel.
    pub weights: Vec<f32>,
    /// `(h, w)` row-major, in `[0, 1]`.
    pub heatmap: Vec<f32>,
    pub target: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FmceTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub normalize: bool,
    pub architecture: FmceConfig,
}

impl Default for FmceTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            optimizer: OptimizerConfig::default(),
            seed: 1,
            normalize: true,
            architecture: FmceConfig::default(),
        }
    }
}

/// Trains on `split.train`; returns the model and its per-epoch mean losses.
/// Zero epochs gives the initialised, untrained model.
pub fn train_fmce<E: Executor>(
    dataset: &FmcsDataset,
    split: &FmcsSplit,
    cfg: &FmceTrainConfig,
    exec: &E,
) -> Result<(FmceModel, Vec<f64>), FmceError> {
    if split.train.is_empty() {
        return Err(FmceError::EmptySplit);
    }
    let architecture = build_fmce(dataset.dims(), dataset.k(), &cfg.architecture)?;
    let mut x = dataset.features(&split.train);
    let normalizer = cfg.normalize.then(|| FeatureNormalizer::fit(&x));
    if let Some(n) = &normalizer {
        n.apply(&mut x);
    }
    let labels = dataset.class_indices(&split.train);
    let graph = architecture.instantiate(cfg.seed)?;
    let mut trainer = ClassifierTrainer::new(
        graph,
        &TrainConfig { batch_size: cfg.batch_size, optimizer: cfg.optimizer, seed: cfg.seed },
    )?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        losses.push(trainer.run_epoch(exec, &x, &labels)?);
    }
    let model = FmceModel::new(architecture, trainer.into_model(), normalizer)?;
    Ok((model, losses))
}

/// Confusion matrix and macro metrics of `model` on the listed samples.
pub fn evaluate<E: Executor>(
    model: &FmceModel,
    exec: &E,
    dataset: &FmcsDataset,
    indices: &[usize],
) -> Result<EvalMetrics, FmceError> {
    if dataset.k() != model.k() {
        return Err(FmceError::KMismatch { expected: model.k(), found: dataset.k() });
    }
    if indices.is_empty() {
        return Err(FmceError::EmptySplit);
    }
    let preds: Vec<usize> = model.predict(exec, &dataset.features(indices))?.into_iter().map(|p| p - 1).collect();
    Ok(EvalMetrics::from_predictions(model.k(), &dataset.class_indices(indices), &preds)?)
}
