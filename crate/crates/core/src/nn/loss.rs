use alloc::vec::Vec;

use super::layer::softmax_row;
use super::{NnError, Tensor4};

/// Row-wise softmax of a `(n, classes)` view of `logits`.
pub fn softmax_rows(logits: &Tensor4) -> Tensor4 {
    let mut out = logits.clone();
    for s in 0..logits.n() {
        let p = softmax_row(logits.sample(s));
        out.sample_mut(s).copy_from_slice(&p);
    }
    out
}

/// Cross-entropy of one row and its gradient, scaled by `1 / batch`.
pub(crate) fn cross_entropy_row(logits: &[f32], label: usize, batch: usize) -> (f64, Vec<f32>) {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let sum: f64 = logits.iter().map(|&z| libm::exp((z - max) as f64)).sum();
    let loss = libm::log(sum) - (logits[label] - max) as f64;
    let mut grad = softmax_row(logits);
    grad[label] -= 1.0;
    let scale = 1.0 / batch as f32;
    for g in grad.iter_mut() {
        *g *= scale;
    }
    (loss, grad)
}

pub(crate) fn check_labels(labels: &[usize], classes: usize, batch: usize) -> Result<(), NnError> {
    if batch == 0 {
        return Err(NnError::EmptyBatch);
    }
    if labels.len() != batch {
        return Err(NnError::LabelCount { labels: labels.len(), batch });
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= classes) {
        return Err(NnError::LabelOutOfRange { label, classes });
    }
    Ok(())
}

/// Mean softmax cross-entropy over the batch and its gradient
/// `(p - onehot) / n` with respect to the logits.
pub fn softmax_cross_entropy(logits: &Tensor4, labels: &[usize]) -> Result<(f64, Tensor4), NnError> {
    let classes = logits.dims().len();
    let n = logits.n();
    check_labels(labels, classes, n)?;
    let mut grad = Tensor4::zeros(logits.shape());
    let mut total = 0.0f64;
    for (s, &label) in labels.iter().enumerate() {
        let (loss, g) = cross_entropy_row(logits.sample(s), label, n);
        total += loss;
        grad.sample_mut(s).copy_from_slice(&g);
    }
    Ok((total / n as f64, grad))
}
