//! Even division of a converged run into `K` phases on the log-loss axis.

use alloc::vec::Vec;

use crate::loss_analysis::{AnalysisError, CqiSeries, LossSeries, SmoothedSeries};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PhaseConfig {
    pub k: usize,
}

impl Default for PhaseConfig {
    fn default() -> Self {
        Self { k: 10 }
    }
}

impl PhaseConfig {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        if self.k < 2 {
            return Err(AnalysisError::InvalidPhaseCount(self.k));
        }
        Ok(())
    }
}

/// Baseline, convergence epoch and the `K` epoch markers of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePlan {
    pub baseline_epoch: usize,
    pub convergence_epoch: usize,
    /// `[E_1, …, E_K]`, strictly increasing, last element = `convergence_epoch`.
    pub markers: Vec<usize>,
    /// `G`; always exactly `K · per_phase_drop`.
    pub total_drop: f64,
    pub per_phase_drop: f64,
    /// Natural log of the smoothed loss, epoch 1 first.
    pub log_series: Vec<f64>,
}

impl PhasePlan {
    pub fn k(&self) -> usize {
        self.markers.len()
    }

    /// Score `k ∈ 1..=K` for a marker epoch, `None` for any other epoch.
    pub fn assign_fmcs(&self, epoch: usize) -> Option<usize> {
        self.markers.iter().position(|&e| e == epoch).map(|i| i + 1)
    }

    /// Net log-loss drop from the baseline at a 1-based epoch.
    pub fn drop_at(&self, epoch: usize) -> Option<f64> {
        let base = self.log_series[self.baseline_epoch - 1];
        epoch.checked_sub(1).and_then(|i| self.log_series.get(i)).map(|v| libm::fabs(v - base))
    }
}

pub fn log_transform(series: &SmoothedSeries) -> Result<Vec<f64>, AnalysisError> {
    series
        .values()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            if v > 0.0 {
                Ok(libm::log(v))
            } else {
                Err(AnalysisError::NonPositive { epoch: i + 1, value: v })
            }
        })
        .collect()
}

/// Plans phases using the convergence epoch detected by the CQI.
pub fn plan_phases(
    raw: &LossSeries,
    smoothed: &SmoothedSeries,
    cqi: &CqiSeries,
    cfg: &PhaseConfig,
) -> Result<PhasePlan, AnalysisError> {
    let convergence = cqi.converged_epoch().ok_or(AnalysisError::NotConverged)?;
    plan_phases_at(raw, smoothed, convergence, cfg)
}

/// Plans phases for an explicitly supplied convergence epoch `E_K`.
pub fn plan_phases_at(
    raw: &LossSeries,
    smoothed: &SmoothedSeries,
    convergence_epoch: usize,
    cfg: &PhaseConfig,
) -> Result<PhasePlan, AnalysisError> {
    cfg.validate()?;
    let log_series = log_transform(smoothed)?;
    let m = log_series.len();
    if raw.len() != m {
        return Err(AnalysisError::TooShort(raw.len().min(m)));
    }
    if convergence_epoch < 1 || convergence_epoch > m {
        return Err(AnalysisError::EpochOutOfRange(convergence_epoch));
    }

    // argmax of the raw loss; strict comparison keeps the earliest epoch on ties
    let mut baseline = 1;
    for (i, &v) in raw.values().iter().enumerate() {
        if v > raw.values()[baseline - 1] {
            baseline = i + 1;
        }
    }
    if convergence_epoch <= baseline {
        return Err(AnalysisError::ConvergedBeforeBaseline {
            baseline,
            convergence: convergence_epoch,
        });
    }

    let base = log_series[baseline - 1];
    let net_drop = |epoch: usize| libm::fabs(log_series[epoch - 1] - base);
    let g = net_drop(convergence_epoch);
    if g == 0.0 {
        return Err(AnalysisError::DegenerateCurve { baseline, convergence: convergence_epoch });
    }
    let per_phase_drop = g / cfg.k as f64;
    let total_drop = per_phase_drop * cfg.k as f64;

    let mut markers = Vec::with_capacity(cfg.k);
    let mut prev = baseline;
    for k in 1..cfg.k {
        let threshold = k as f64 * per_phase_drop;
        let epoch = (prev + 1..convergence_epoch)
            .find(|&e| net_drop(e) >= threshold)
            .ok_or(AnalysisError::InfeasibleSegmentation { k })?;
        markers.push(epoch);
        prev = epoch;
    }
    markers.push(convergence_epoch);

    Ok(PhasePlan {
        baseline_epoch: baseline,
        convergence_epoch,
        markers,
        total_drop,
        per_phase_drop,
        log_series,
    })
}
