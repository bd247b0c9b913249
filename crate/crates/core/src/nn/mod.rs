//! Minimal deterministic CNN engine.
//!
//! Tensors are 32-bit, laid out `(n, c, h, w)` row-major. Every layer works on
//! one sample at a time; batch gradients are the per-sample gradients summed in
//! sample-index order, which keeps results bit-identical whatever
//! [`Executor`] runs the samples.

mod exec;
mod layer;
mod loss;
mod model;
mod optim;
mod tensor;
mod train;

pub use exec::{Executor, Sequential};
pub use layer::{LayerKind, LayerSpec, PadMode, Params};
pub use loss::{softmax_cross_entropy, softmax_rows};
pub use model::{ForwardCache, Gradients, ModelGraph};
pub use optim::{OptimizerConfig, OptimizerKind, OptimizerState};
pub use tensor::{Dims, Tensor4};
pub use train::{batch_loss_and_gradients, BatchResult, ClassifierTrainer, TrainConfig};

/// Engine errors. Layer indices are 0-based positions in the model's layer list.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NnError {
    #[error("tensor data length {found} does not match shape {shape:?}")]
    DataLength { shape: [usize; 4], found: usize },
    #[error("layer {layer} ({kind}): cannot accept input {input}: {reason}")]
    IncompatibleLayer { layer: usize, kind: &'static str, input: Dims, reason: &'static str },
    #[error("input shape {found} does not match the model input {expected}")]
    InputShape { expected: Dims, found: Dims },
    #[error("layer {layer}: parameter tensors have the wrong size")]
    ParameterShape { layer: usize },
    #[error("layer {layer}: cached activation does not match the model (stale cache)")]
    StaleCache { layer: usize },
    #[error("upstream gradient shape {found:?} does not match output shape {expected:?}")]
    UpstreamShape { expected: [usize; 4], found: [usize; 4] },
    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("label count {labels} does not match batch size {batch}")]
    LabelCount { labels: usize, batch: usize },
    #[error("empty batch")]
    EmptyBatch,
    #[error("invalid layer range {start}..{end}")]
    LayerRange { start: usize, end: usize },
    #[error("learning rate must be positive and finite, got {0}")]
    LearningRate(f32),
    #[error("batch size must be at least 1")]
    BatchSize,
    #[error("training diverged at epoch {epoch}: loss {loss} against initial {initial}")]
    Diverged { epoch: usize, loss: f64, initial: f64 },
}
