//! Confusion matrix and macro-averaged precision, recall and F1.

use alloc::vec;
use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum MetricsError {
    #[error("cannot evaluate an empty prediction set")]
    Empty,
    #[error("{predictions} predictions for {labels} labels")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("class {class} out of range for {classes} classes")]
    ClassOutOfRange { class: usize, classes: usize },
}

/// Classification metrics over `k` classes.
///
/// `confusion[t][p]` counts samples of true class `t` predicted as `p`
/// (0-based). Precision, recall and F1 are unweighted means of the per-class
/// values; a class with no predicted positives has precision 0, and a class
/// whose precision and recall are both 0 has F1 0.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalMetrics {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub confusion: Vec<Vec<u64>>,
}

impl EvalMetrics {
    pub fn from_predictions(k: usize, labels: &[usize], predictions: &[usize]) -> Result<Self, MetricsError> {
        if labels.is_empty() {
            return Err(MetricsError::Empty);
        }
        if labels.len() != predictions.len() {
            return Err(MetricsError::LengthMismatch { predictions: predictions.len(), labels: labels.len() });
        }
        let mut confusion = vec![vec![0u64; k]; k];
        for (&t, &p) in labels.iter().zip(predictions) {
            for class in [t, p] {
                if class >= k {
                    return Err(MetricsError::ClassOutOfRange { class, classes: k });
                }
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let k = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let (mut p_sum, mut r_sum, mut f_sum) = (0.0, 0.0, 0.0);
        for (c, row) in confusion.iter().enumerate() {
            let tp = row[c] as f64;
            let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
            let actual: u64 = row.iter().sum();
            let p = if predicted > 0 { tp / predicted as f64 } else { 0.0 };
            let r = if actual > 0 { tp / actual as f64 } else { 0.0 };
            let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
            p_sum += p;
            r_sum += r;
            f_sum += f;
        }
        let kf = k.max(1) as f64;
        Self {
            accuracy: if total > 0 { correct as f64 / total as f64 } else { 0.0 },
            precision: p_sum / kf,
            recall: r_sum / kf,
            f1: f_sum / kf,
            confusion,
        }
    }

    pub fn k(&self) -> usize {
        self.confusion.len()
    }

    pub fn total(&self) -> u64 {
        self.confusion.iter().flatten().sum()
    }
}
