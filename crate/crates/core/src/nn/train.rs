use alloc::vec::Vec;

use super::exec::Executor;
use super::loss::{check_labels, cross_entropy_row};
use super::{Gradients, ModelGraph, NnError, OptimizerConfig, OptimizerState, Tensor4};
use crate::rng::Rng;

/// Summed per-sample loss and gradients of one minibatch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchResult {
    pub loss_sum: f64,
    pub count: usize,
    /// Gradient of the *mean* batch loss.
    pub grads: Gradients,
}

/// Mean softmax cross-entropy of the model's logits and its parameter
/// gradients. Samples may run on any executor; the reduction is always in
/// sample order.
pub fn batch_loss_and_gradients<E: Executor>(
    model: &ModelGraph,
    exec: &E,
    inputs: &Tensor4,
    labels: &[usize],
) -> Result<BatchResult, NnError> {
    let end = model.logits_end();
    let classes = if end == 0 { model.input_dims().len() } else { model.layer_dims(end - 1).len() };
    let n = inputs.n();
    check_labels(labels, classes, n)?;
    if inputs.dims() != model.input_dims() {
        return Err(NnError::InputShape { expected: model.input_dims(), found: inputs.dims() });
    }
    let per_sample = exec.map(n, |s| {
        let acts = model.forward_sample_range(0, end, inputs.sample(s));
        let (loss, grad_logits) = cross_entropy_row(&acts[acts.len() - 1], labels[s], n);
        let (grads, _) = model.backward_sample_range(0, &acts, grad_logits);
        (loss, grads)
    });
    let mut grads = Gradients::zeros_like(model);
    let mut loss_sum = 0.0;
    for (loss, g) in per_sample {
        loss_sum += loss;
        grads.add_assign(&g);
    }
    Ok(BatchResult { loss_sum, count: n, grads })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub optimizer: OptimizerConfig,
    /// Seed of the per-epoch shuffling stream.
    pub seed: u64,
}

/// Epoch-at-a-time minibatch trainer for a softmax classifier.
#[derive(Debug, Clone)]
pub struct ClassifierTrainer {
    model: ModelGraph,
    optimizer: OptimizerState,
    rng: Rng,
    batch_size: usize,
    initial_loss: Option<f64>,
    epochs_done: usize,
}

impl ClassifierTrainer {
    pub fn new(model: ModelGraph, cfg: &TrainConfig) -> Result<Self, NnError> {
        if cfg.batch_size == 0 {
            return Err(NnError::BatchSize);
        }
        Ok(Self {
            model,
            optimizer: OptimizerState::new(cfg.optimizer)?,
            rng: Rng::derive(cfg.seed, 0x5348_5546),
            batch_size: cfg.batch_size,
            initial_loss: None,
            epochs_done: 0,
        })
    }

    pub fn model(&self) -> &ModelGraph {
        &self.model
    }

    pub fn into_model(self) -> ModelGraph {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epochs_done
    }

    /// One shuffled pass over the data. Returns the mean per-sample loss seen
    /// during the epoch. Fails if it exceeds ten times the first epoch's loss.
    pub fn run_epoch<E: Executor>(&mut self, exec: &E, images: &Tensor4, labels: &[usize]) -> Result<f64, NnError> {
        let n = images.n();
        if n == 0 {
            return Err(NnError::EmptyBatch);
        }
        if labels.len() != n {
            return Err(NnError::LabelCount { labels: labels.len(), batch: n });
        }
        let mut order: Vec<usize> = (0..n).collect();
        self.rng.shuffle(&mut order);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(self.batch_size) {
            let batch = images.gather(chunk);
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let res = batch_loss_and_gradients(&self.model, exec, &batch, &batch_labels)?;
            loss_sum += res.loss_sum;
            self.optimizer.step(&mut self.model, &res.grads)?;
        }
        self.epochs_done += 1;
        let loss = loss_sum / n as f64;
        let initial = *self.initial_loss.get_or_insert(loss);
        if !loss.is_finite() || loss > 10.0 * initial {
            return Err(NnError::Diverged { epoch: self.epochs_done, loss, initial });
        }
        Ok(loss)
    }
}
