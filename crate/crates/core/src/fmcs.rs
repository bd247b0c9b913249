//! The FMCS dataset: backbone feature maps at each marker epoch, labelled with
//! the marker's convergence score.

use alloc::vec::Vec;

use crate::nn::{Dims, Executor, Tensor4};
use crate::original_task::{OriginalTaskModel, TaskError};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FmcsError {
    #[error("no checkpoint for marker epoch {epoch} (score {k})")]
    MissingCheckpoint { k: usize, epoch: usize },
    #[error("checkpoint for marker epoch {epoch} could not be used: {reason}")]
    BadCheckpoint { epoch: usize, reason: alloc::string::String },
    #[error("feature shape {found} at epoch {epoch} differs from {expected}")]
    ShapeDrift { epoch: usize, expected: Dims, found: Dims },
    #[error("label {label} outside 1..={k}")]
    LabelOutOfRange { label: u8, k: usize },
    #[error("sample {index} has {found} values, expected {expected}")]
    FeatureLength { index: usize, expected: usize, found: usize },
    #[error("K = {0} is not supported (2..=255)")]
    InvalidK(usize),
    #[error("dataset is empty")]
    Empty,
    #[error("need at least {needed} samples to split, have {have}")]
    TooSmall { needed: usize, have: usize },
    #[error("labels are not balanced: {0:?}")]
    Unbalanced(Vec<usize>),
    #[error(transparent)]
    Task(#[from] TaskError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmcsSample {
    /// `(c, h, w)` feature map, row-major.
    pub features: Vec<f32>,
    /// Convergence score in `1..=K`.
    pub label: u8,
    /// Index into the original task's training images.
    pub source_index: u32,
    pub marker_epoch: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FmcsDataset {
    k: usize,
    dims: Dims,
    samples: Vec<FmcsSample>,
}

impl FmcsDataset {
    pub fn new(k: usize, dims: Dims, samples: Vec<FmcsSample>) -> Result<Self, FmcsError> {
        if !(2..=255).contains(&k) {
            return Err(FmcsError::InvalidK(k));
        }
        for (i, s) in samples.iter().enumerate() {
            if s.label == 0 || s.label as usize > k {
                return Err(FmcsError::LabelOutOfRange { label: s.label, k });
            }
            if s.features.len() != dims.len() {
                return Err(FmcsError::FeatureLength { index: i, expected: dims.len(), found: s.features.len() });
            }
        }
        Ok(Self { k, dims, samples })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn samples(&self) -> &[FmcsSample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Count per score; `histogram[k - 1]` is the count of label `k`.
    pub fn label_histogram(&self) -> Vec<usize> {
        histogram(self.k, self.samples.iter().map(|s| s.label))
    }

    pub fn histogram_of(&self, indices: &[usize]) -> Vec<usize> {
        histogram(self.k, indices.iter().map(|&i| self.samples[i].label))
    }

    /// Stacks the listed samples' features.
    pub fn features(&self, indices: &[usize]) -> Tensor4 {
        let mut data = Vec::with_capacity(indices.len() * self.dims.len());
        for &i in indices {
            data.extend_from_slice(&self.samples[i].features);
        }
        Tensor4::new([indices.len(), self.dims.c, self.dims.h, self.dims.w], data).expect("consistent lengths")
    }

    /// 0-based class indices (`label - 1`) of the listed samples.
    pub fn class_indices(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().map(|&i| self.samples[i].label as usize - 1).collect()
    }
}

fn histogram(k: usize, labels: impl Iterator<Item = u8>) -> Vec<usize> {
    let mut h = alloc::vec![0; k];
    for l in labels {
        h[l as usize - 1] += 1;
    }
    h
}

/// For each marker `E_k` (`markers[k - 1]`, usually [`PhasePlan::markers`](crate::PhasePlan::markers)),
/// loads the backbone weights `W_{E_k}` through `load` and labels its feature
/// maps over `train_images` with `k`. Samples are ordered by score, then by
/// source index.
pub fn build_fmcs_dataset<E, L>(
    markers: &[usize],
    mut load: L,
    train_images: &Tensor4,
    exec: &E,
) -> Result<FmcsDataset, FmcsError>
where
    E: Executor,
    L: FnMut(usize, usize) -> Result<OriginalTaskModel, FmcsError>,
{
    let mut dims: Option<Dims> = None;
    if !(2..=255).contains(&markers.len()) {
        return Err(FmcsError::InvalidK(markers.len()));
    }
    let mut samples = Vec::with_capacity(markers.len() * train_images.n());
    for (i, &epoch) in markers.iter().enumerate() {
        let k = i + 1;
        let model = load(k, epoch)?;
        let maps = model.extract_feature_maps(exec, train_images)?;
        let expected = *dims.get_or_insert(maps.dims());
        if maps.dims() != expected {
            return Err(FmcsError::ShapeDrift { epoch, expected, found: maps.dims() });
        }
        for n in 0..maps.n() {
            samples.push(FmcsSample {
                features: maps.sample(n).to_vec(),
                label: k as u8,
                source_index: n as u32,
                marker_epoch: epoch as u32,
            });
        }
    }
    FmcsDataset::new(markers.len(), dims.ok_or(FmcsError::Empty)?, samples)
}

/// Label-balanced 3:1 train/test partition (indices into the dataset, ascending).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FmcsSplit {
    pub seed: u64,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Each label contributes `count / 4` shuffled samples to test and the rest
/// (including any remainder) to train.
pub fn split(dataset: &FmcsDataset, seed: u64) -> Result<FmcsSplit, FmcsError> {
    let needed = dataset.k * 4;
    if dataset.len() < needed {
        return Err(FmcsError::TooSmall { needed, have: dataset.len() });
    }
    let hist = dataset.label_histogram();
    if hist.iter().any(|&c| c != hist[0]) {
        return Err(FmcsError::Unbalanced(hist));
    }
    let mut train = Vec::new();
    let mut test = Vec::new();
    for label in 1..=dataset.k {
        let mut idx: Vec<usize> =
            dataset.samples.iter().enumerate().filter(|(_, s)| s.label as usize == label).map(|(i, _)| i).collect();
        Rng::derive(seed, label as u64).shuffle(&mut idx);
        let n_test = idx.len() / 4;
        test.extend_from_slice(&idx[..n_test]);
        train.extend_from_slice(&idx[n_test..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok(FmcsSplit { seed, train, test })
}
