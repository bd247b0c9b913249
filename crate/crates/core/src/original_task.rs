//! Procedural four-class image task, its backbone + head classifier, and
//! feature-map extraction.

use alloc::vec;
use alloc::vec::Vec;
use core::f32::consts::TAU;

use crate::nn::{
    ClassifierTrainer, Dims, Executor, LayerSpec, ModelGraph, NnError, OptimizerConfig, Tensor4, TrainConfig,
};
use crate::rng::Rng;

pub const IMAGE_SIZE: usize = 16;
pub const CLASSES: usize = 4;
pub const NOISE_SIGMA: f32 = 0.1;
pub const MIN_PER_CLASS: usize = 50;
pub const IMAGE_DIMS: Dims = Dims::new(1, IMAGE_SIZE, IMAGE_SIZE);
/// Backbone output for a 16×16 input.
pub const FEATURE_DIMS: Dims = Dims::new(16, 4, 4);
/// Layers `0..BACKBONE_LAYERS` form the backbone; the rest is the head.
pub const BACKBONE_LAYERS: usize = 6;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TaskError {
    #[error("need at least {MIN_PER_CLASS} images per class, got {0}")]
    TooFewPerClass(usize),
    #[error("training needs at least one epoch")]
    NoEpochs,
    #[error("model is not an original-task backbone: {0}")]
    Architecture(&'static str),
    #[error(transparent)]
    Engine(#[from] NnError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternClass {
    HorizontalStripes,
    VerticalStripes,
    Checkerboard,
    CenteredBlob,
}

impl PatternClass {
    pub const ALL: [PatternClass; CLASSES] = [
        PatternClass::HorizontalStripes,
        PatternClass::VerticalStripes,
        PatternClass::Checkerboard,
        PatternClass::CenteredBlob,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Geometry of one rendered pattern.
///
/// `scale` is the stripe period, checker cell size or blob sigma (pixels);
/// the offsets shift the pattern (stripes use the offset across the stripes).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternParams {
    pub scale: f32,
    pub offset_x: f32,
    pub offset_y: f32,
}

impl PatternParams {
    pub fn canonical(class: PatternClass) -> Self {
        let scale = match class {
            PatternClass::HorizontalStripes | PatternClass::VerticalStripes => 4.0,
            PatternClass::Checkerboard | PatternClass::CenteredBlob => 3.0,
        };
        Self { scale, offset_x: 0.0, offset_y: 0.0 }
    }

    fn random(class: PatternClass, rng: &mut Rng) -> Self {
        match class {
            PatternClass::HorizontalStripes | PatternClass::VerticalStripes => {
                let scale = rng.uniform(3.0, 6.0);
                let off = rng.uniform(0.0, scale);
                Self { scale, offset_x: off, offset_y: off }
            }
            PatternClass::Checkerboard => {
                let scale = rng.uniform(2.0, 4.0);
                Self { scale, offset_x: rng.uniform(0.0, 2.0 * scale), offset_y: rng.uniform(0.0, 2.0 * scale) }
            }
            PatternClass::CenteredBlob => {
                Self { scale: rng.uniform(2.0, 4.0), offset_x: rng.uniform(-1.5, 1.5), offset_y: rng.uniform(-1.5, 1.5) }
            }
        }
    }
}

/// Noise-free rendering in `[0, 1]`, row-major 16×16.
pub fn render_pattern(class: PatternClass, p: &PatternParams) -> Vec<f32> {
    let mut img = vec![0.0f32; IMAGE_SIZE * IMAGE_SIZE];
    let centre = (IMAGE_SIZE as f32 - 1.0) / 2.0;
    for y in 0..IMAGE_SIZE {
        for x in 0..IMAGE_SIZE {
            let (xf, yf) = (x as f32, y as f32);
            img[y * IMAGE_SIZE + x] = match class {
                PatternClass::HorizontalStripes => 0.5 + 0.5 * libm::sinf(TAU * (yf + p.offset_y) / p.scale),
                PatternClass::VerticalStripes => 0.5 + 0.5 * libm::sinf(TAU * (xf + p.offset_x) / p.scale),
                PatternClass::Checkerboard => {
                    let cx = libm::floorf((xf + p.offset_x) / p.scale) as i64;
                    let cy = libm::floorf((yf + p.offset_y) / p.scale) as i64;
                    ((cx + cy).rem_euclid(2)) as f32
                }
                PatternClass::CenteredBlob => {
                    let dx = xf - centre - p.offset_x;
                    let dy = yf - centre - p.offset_y;
                    libm::expf(-(dx * dx + dy * dy) / (2.0 * p.scale * p.scale))
                }
            };
        }
    }
    img
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledImages {
    pub images: Tensor4,
    pub labels: Vec<usize>,
}

impl LabeledImages {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn class_counts(&self) -> [usize; CLASSES] {
        let mut counts = [0; CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// Stratified 3:1 split of the procedural images.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub train: LabeledImages,
    pub test: LabeledImages,
    pub seed: u64,
    pub n_per_class: usize,
}

pub fn generate_dataset(seed: u64, n_per_class: usize) -> Result<SyntheticDataset, TaskError> {
    generate_dataset_with_noise(seed, n_per_class, NOISE_SIGMA)
}

/// As [`generate_dataset`] with an explicit noise level. Per class, the first
/// `n - n/4` shuffled images go to train, the rest to test; both splits are
/// ordered by class, then by generation order.
pub fn generate_dataset_with_noise(seed: u64, n_per_class: usize, sigma: f32) -> Result<SyntheticDataset, TaskError> {
    if n_per_class < MIN_PER_CLASS {
        return Err(TaskError::TooFewPerClass(n_per_class));
    }
    let mut rng = Rng::derive(seed, 0x494d_4147);
    let n_test = n_per_class / 4;
    let mut train = (Vec::new(), Vec::new());
    let mut test = (Vec::new(), Vec::new());
    for class in PatternClass::ALL {
        let mut images = Vec::with_capacity(n_per_class);
        for _ in 0..n_per_class {
            let params = PatternParams::random(class, &mut rng);
            let mut img = render_pattern(class, &params);
            if sigma > 0.0 {
                for v in img.iter_mut() {
                    *v = (*v + sigma * rng.normal() as f32).clamp(0.0, 1.0);
                }
            }
            images.push(img);
        }
        let mut order: Vec<usize> = (0..n_per_class).collect();
        rng.shuffle(&mut order);
        let (test_idx, train_idx) = order.split_at(n_test);
        let (mut train_idx, mut test_idx) = (train_idx.to_vec(), test_idx.to_vec());
        train_idx.sort_unstable();
        test_idx.sort_unstable();
        for &i in &train_idx {
            train.0.push(images[i].clone());
            train.1.push(class.index());
        }
        for &i in &test_idx {
            test.0.push(images[i].clone());
            test.1.push(class.index());
        }
    }
    Ok(SyntheticDataset {
        train: LabeledImages { images: Tensor4::from_samples(IMAGE_DIMS, train.0)?, labels: train.1 },
        test: LabeledImages { images: Tensor4::from_samples(IMAGE_DIMS, test.0)?, labels: test.1 },
        seed,
        n_per_class,
    })
}

/// `conv 1→8, relu, pool, conv 8→16, relu, pool | GAP, FC 16→4, softmax`.
pub fn original_task_layers() -> Vec<LayerSpec> {
    vec![
        LayerSpec::conv3x3(1, 8),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::conv3x3(8, 16),
        LayerSpec::Relu,
        LayerSpec::MaxPool2x2,
        LayerSpec::GlobalAvgPool,
        LayerSpec::fully_connected(16, CLASSES),
        LayerSpec::Softmax,
    ]
}

/// Backbone `C` followed by head `F` in one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct OriginalTaskModel {
    graph: ModelGraph,
}

impl OriginalTaskModel {
    pub fn new(seed: u64) -> Result<Self, TaskError> {
        Ok(Self { graph: ModelGraph::new(IMAGE_DIMS, original_task_layers(), seed)? })
    }

    /// Accepts a graph (e.g. from a checkpoint) whose backbone matches the
    /// original-task architecture.
    pub fn from_graph(graph: ModelGraph) -> Result<Self, TaskError> {
        if graph.input_dims() != IMAGE_DIMS {
            return Err(TaskError::Architecture("input must be (1, 16, 16)"));
        }
        if graph.layers().len() < BACKBONE_LAYERS || graph.layers()[..BACKBONE_LAYERS] != original_task_layers()[..BACKBONE_LAYERS] {
            return Err(TaskError::Architecture("backbone layers differ"));
        }
        Ok(Self { graph })
    }

    pub fn graph(&self) -> &ModelGraph {
        &self.graph
    }

    pub fn into_graph(self) -> ModelGraph {
        self.graph
    }

    /// Backbone-only forward pass, order-preserving, `(n, 16, 4, 4)`.
    pub fn extract_feature_maps<E: Executor>(&self, exec: &E, images: &Tensor4) -> Result<Tensor4, TaskError> {
        Ok(self.graph.forward_range_with(exec, 0, BACKBONE_LAYERS, images)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OriginalTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for OriginalTrainConfig {
    fn default() -> Self {
        Self { epochs: 60, batch_size: 64, optimizer: OptimizerConfig::default(), seed: 7 }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TrainError<X> {
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error("epoch callback failed: {0}")]
    Callback(X),
}

impl<X> From<NnError> for TrainError<X> {
    fn from(e: NnError) -> Self {
        TrainError::Task(TaskError::Engine(e))
    }
}

/// Trains on the train split for `cfg.epochs` epochs. After every epoch the
/// callback receives the 1-based epoch, its mean loss and the weights `W_m`.
/// Returns the final model and the per-epoch loss sequence.
pub fn train_original<E, F, X>(
    data: &SyntheticDataset,
    cfg: &OriginalTrainConfig,
    exec: &E,
    mut on_epoch: F,
) -> Result<(OriginalTaskModel, Vec<f64>), TrainError<X>>
where
    E: Executor,
    F: FnMut(usize, f64, &ModelGraph) -> Result<(), X>,
{
    if cfg.epochs == 0 {
        return Err(TaskError::NoEpochs.into());
    }
    let model = OriginalTaskModel::new(cfg.seed)?;
    let mut trainer = ClassifierTrainer::new(
        model.into_graph(),
        &TrainConfig { batch_size: cfg.batch_size, optimizer: cfg.optimizer, seed: cfg.seed },
    )?;
    let mut losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        let loss = trainer.run_epoch(exec, &data.train.images, &data.train.labels)?;
        losses.push(loss);
        on_epoch(epoch, loss, trainer.model()).map_err(TrainError::Callback)?;
    }
    Ok((OriginalTaskModel { graph: trainer.into_model() }, losses))
}
