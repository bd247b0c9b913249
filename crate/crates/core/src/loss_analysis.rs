//! Loss-sequence smoothing and the convergence quantification indicator.
//!
//! Epochs are 1-based everywhere in this module: `values()[0]` is epoch 1.
//! The CQI is only defined from epoch 2 onwards, since epoch 1 has no
//! predecessor to difference against.

use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by loss analysis and phase segmentation.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AnalysisError {
    #[error("loss series needs at least 2 epochs, got {0}")]
    TooShort(usize),
    #[error("loss at epoch {epoch} is not finite")]
    NonFinite { epoch: usize },
    #[error("loss at epoch {epoch} is negative ({value})")]
    Negative { epoch: usize, value: f64 },
    #[error("smoothing alpha must lie in (0, 1], got {0}")]
    InvalidAlpha(f64),
    #[error("CQI window must be at least 1")]
    InvalidWindow,
    #[error("CQI threshold must be positive and finite, got {0}")]
    InvalidThreshold(f64),
    #[error("smoothed loss at epoch {epoch} is not positive ({value}); cannot take its logarithm")]
    NonPositive { epoch: usize, value: f64 },
    #[error("number of phases must be at least 2, got {0}")]
    InvalidPhaseCount(usize),
    #[error("run has not converged: CQI never reached the threshold")]
    NotConverged,
    #[error("convergence epoch {0} is outside the series")]
    EpochOutOfRange(usize),
    #[error("degenerate loss curve: log-loss drop between baseline epoch {baseline} and convergence epoch {convergence} is zero")]
    DegenerateCurve { baseline: usize, convergence: usize },
    #[error("convergence epoch {convergence} does not come after baseline epoch {baseline}")]
    ConvergedBeforeBaseline { baseline: usize, convergence: usize },
    #[error("infeasible segmentation: marker {k} cannot be placed strictly between the previous marker and the convergence epoch")]
    InfeasibleSegmentation { k: usize },
}

/// Raw per-epoch training loss.
#[derive(Debug, Clone, PartialEq)]
pub struct LossSeries {
    run_id: String,
    values: Vec<f64>,
}

impl LossSeries {
    pub fn new(run_id: impl Into<String>, values: Vec<f64>) -> Result<Self, AnalysisError> {
        if values.len() < 2 {
            return Err(AnalysisError::TooShort(values.len()));
        }
        for (i, &v) in values.iter().enumerate() {
            if !v.is_finite() {
                return Err(AnalysisError::NonFinite { epoch: i + 1 });
            }
            if v < 0.0 {
                return Err(AnalysisError::Negative { epoch: i + 1, value: v });
            }
        }
        Ok(Self { run_id: run_id.into(), values })
    }

    pub fn run_id(&self) -> &str {
        &self.run_id
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Number of epochs `M`.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Loss at a 1-based epoch.
    pub fn at(&self, epoch: usize) -> Option<f64> {
        epoch.checked_sub(1).and_then(|i| self.values.get(i).copied())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SmoothingMode {
    /// Exponential moving average over the smoothed predecessor.
    #[default]
    Recursive,
    /// Blend with the raw predecessor, `α·L[m-1] + (1-α)·L[m]`.
    RawPredecessor,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmoothingConfig {
    pub alpha: f64,
    pub mode: SmoothingMode,
}

impl Default for SmoothingConfig {
    fn default() -> Self {
        Self { alpha: 0.85, mode: SmoothingMode::Recursive }
    }
}

impl SmoothingConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(AnalysisError::InvalidAlpha(self.alpha));
        }
        Ok(())
    }
}

/// Smoothed loss, aligned epoch-for-epoch with its source series.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothedSeries {
    values: Vec<f64>,
}

impl SmoothedSeries {
    /// Wraps an already-smoothed sequence.
    pub fn from_values(values: Vec<f64>) -> Result<Self, AnalysisError> {
        if values.len() < 2 {
            return Err(AnalysisError::TooShort(values.len()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(AnalysisError::NonFinite { epoch: i + 1 });
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn smooth(series: &LossSeries, cfg: &SmoothingConfig) -> Result<SmoothedSeries, AnalysisError> {
    cfg.validate()?;
    let raw = series.values();
    let alpha = cfg.alpha;
    let mut out = Vec::with_capacity(raw.len());
    out.push(raw[0]);
    for m in 1..raw.len() {
        let prev = match cfg.mode {
            SmoothingMode::Recursive => out[m - 1],
            SmoothingMode::RawPredecessor => raw[m - 1],
        };
        out.push(alpha * prev + (1.0 - alpha) * raw[m]);
    }
    Ok(SmoothedSeries { values: out })
}

/// `ΔL̃[m] = L̃[m] - L̃[m-1]` for `m = 2..=M`.
pub fn first_difference(series: &SmoothedSeries) -> Vec<f64> {
    series.values.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Same as [`first_difference`] over a bare slice, rejecting inputs shorter than 2.
pub fn first_difference_of(values: &[f64]) -> Result<Vec<f64>, AnalysisError> {
    if values.len() < 2 {
        return Err(AnalysisError::TooShort(values.len()));
    }
    Ok(values.windows(2).map(|w| w[1] - w[0]).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CqiConfig {
    /// Moving-average window `B`, in epochs.
    pub window: usize,
    /// Convergence threshold `μ_CQI`.
    pub threshold: f64,
}

impl Default for CqiConfig {
    fn default() -> Self {
        Self { window: 10, threshold: 1e-4 }
    }
}

impl CqiConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.window == 0 {
            return Err(AnalysisError::InvalidWindow);
        }
        if !(self.threshold > 0.0 && self.threshold.is_finite()) {
            return Err(AnalysisError::InvalidThreshold(self.threshold));
        }
        Ok(())
    }
}

/// Differences and windowed CQI, both indexed from epoch 2.
#[derive(Debug, Clone, PartialEq)]
pub struct CqiSeries {
    diffs: Vec<f64>,
    cqi: Vec<f64>,
    converged_epoch: Option<usize>,
}

impl CqiSeries {
    /// Builds a series with an externally fixed convergence epoch. Used when
    /// the epoch has to be held constant across transformed inputs.
    pub fn with_converged_epoch(mut self, epoch: Option<usize>) -> Self {
        self.converged_epoch = epoch;
        self
    }

    /// `diffs()[i]` is the difference at epoch `i + 2`.
    pub fn diffs(&self) -> &[f64] {
        &self.diffs
    }

    /// `values()[i]` is the CQI at epoch `i + 2`.
    pub fn values(&self) -> &[f64] {
        &self.cqi
    }

    pub fn at(&self, epoch: usize) -> Option<f64> {
        epoch.checked_sub(2).and_then(|i| self.cqi.get(i).copied())
    }

    pub fn converged_epoch(&self) -> Option<usize> {
        self.converged_epoch
    }
}

pub fn cqi(series: &SmoothedSeries, cfg: &CqiConfig) -> Result<CqiSeries, AnalysisError> {
    cfg.validate()?;
    let diffs = first_difference(series);
    let abs: Vec<f64> = diffs.iter().map(|d| libm::fabs(*d)).collect();
    let mut values = Vec::with_capacity(abs.len());
    for end in 0..abs.len() {
        // epoch m = end + 2 has end + 1 differences available
        let w = cfg.window.min(end + 1);
        let window = &abs[end + 1 - w..=end];
        values.push(window.iter().sum::<f64>() / w as f64);
    }
    let converged_epoch = values.iter().position(|&c| c <= cfg.threshold).map(|i| i + 2);
    Ok(CqiSeries { diffs, cqi: values, converged_epoch })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn series(v: &[f64]) -> LossSeries {
        LossSeries::new("t", v.to_vec()).unwrap()
    }

    #[test]
    fn rejects_short_and_corrupt_series() {
        assert_eq!(LossSeries::new("t", vec![1.0]), Err(AnalysisError::TooShort(1)));
        assert_eq!(
            LossSeries::new("t", vec![1.0, f64::NAN]),
            Err(AnalysisError::NonFinite { epoch: 2 })
        );
        assert!(matches!(
            LossSeries::new("t", vec![1.0, 2.0, -0.5]),
            Err(AnalysisError::Negative { epoch: 3, .. })
        ));
        assert_eq!(first_difference_of(&[1.0]), Err(AnalysisError::TooShort(1)));
    }

    #[test]
    fn recursive_two_step() {
        let cfg = SmoothingConfig { alpha: 0.5, mode: SmoothingMode::Recursive };
        let s = smooth(&series(&[4.0, 2.0, 2.0]), &cfg).unwrap();
        assert_eq!(s.values(), &[4.0, 3.0, 2.5]);
    }

    #[test]
    fn raw_predecessor_uses_raw_predecessor() {
        let cfg = SmoothingConfig { alpha: 0.5, mode: SmoothingMode::RawPredecessor };
        let s = smooth(&series(&[4.0, 2.0, 2.0]), &cfg).unwrap();
        assert_eq!(s.values(), &[4.0, 3.0, 2.0]);
    }

    #[test]
    fn constant_series_is_a_fixed_point() {
        for mode in [SmoothingMode::Recursive, SmoothingMode::RawPredecessor] {
            for alpha in [0.1, 0.5, 0.85, 1.0] {
                let s = smooth(&series(&[3.0, 3.0, 3.0]), &SmoothingConfig { alpha, mode }).unwrap();
                assert_eq!(s.values(), &[3.0, 3.0, 3.0]);
            }
        }
    }

    #[test]
    fn alpha_bounds() {
        let s = series(&[1.0, 2.0]);
        for alpha in [0.0, -0.1, 1.01, f64::NAN] {
            let cfg = SmoothingConfig { alpha, mode: SmoothingMode::Recursive };
            assert!(matches!(smooth(&s, &cfg), Err(AnalysisError::InvalidAlpha(_))));
        }
    }

    #[test]
    fn differences() {
        let s = SmoothedSeries::from_values(vec![4.0, 3.0, 2.5]).unwrap();
        assert_eq!(first_difference(&s), vec![-1.0, -0.5]);
        let c = SmoothedSeries::from_values(vec![2.0; 5]).unwrap();
        assert!(first_difference(&c).iter().all(|&d| d == 0.0));
        let dec = SmoothedSeries::from_values(vec![5.0, 4.0, 3.5, 1.0, 0.2]).unwrap();
        assert!(first_difference(&dec).iter().all(|&d| d < 0.0));
    }

    #[test]
    fn windowed_mean_truncates_at_the_head() {
        // |Δ| = [1.0, 0.5, 0.25]
        let s = SmoothedSeries::from_values(vec![4.0, 3.0, 2.5, 2.25]).unwrap();
        let c = cqi(&s, &CqiConfig { window: 2, threshold: 0.4 }).unwrap();
        assert_eq!(c.values(), &[1.0, 0.75, 0.375]);
        assert_eq!(c.converged_epoch(), Some(4));
        assert_eq!(c.at(1), None);
        assert_eq!(c.at(2), Some(1.0));
    }

    #[test]
    fn constant_loss_converges_at_epoch_two() {
        let s = smooth(&series(&[0.7; 12]), &SmoothingConfig::default()).unwrap();
        let c = cqi(&s, &CqiConfig { window: 10, threshold: 1e-12 }).unwrap();
        assert!(c.values().iter().all(|&v| v == 0.0));
        assert_eq!(c.converged_epoch(), Some(2));
    }

    #[test]
    fn never_converging_series() {
        let s = SmoothedSeries::from_values(vec![10.0, 5.0, 2.0, 1.0]).unwrap();
        let c = cqi(&s, &CqiConfig { window: 3, threshold: 0.1 }).unwrap();
        assert_eq!(c.converged_epoch(), None);
    }

    #[test]
    fn config_validation() {
        let s = SmoothedSeries::from_values(vec![1.0, 0.5]).unwrap();
        assert_eq!(cqi(&s, &CqiConfig { window: 0, threshold: 1.0 }), Err(AnalysisError::InvalidWindow));
        assert!(matches!(
            cqi(&s, &CqiConfig { window: 2, threshold: 0.0 }),
            Err(AnalysisError::InvalidThreshold(_))
        ));
    }
}
