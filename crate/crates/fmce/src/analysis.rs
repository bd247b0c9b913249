//! Loss-curve analysis as used by `analyze` and the pipeline.

use std::fmt::Write as _;
use std::path::Path;

use fmce_core::{
    cqi, log_transform, plan_phases, AnalysisError, CqiConfig, CqiSeries, LossSeries, PhaseConfig, PhasePlan,
    SmoothedSeries, SmoothingConfig, SmoothingMode,
};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisOptions {
    pub smoothing: SmoothingConfig,
    pub cqi: CqiConfig,
    pub phases: PhaseConfig,
}

pub fn mode_name(mode: SmoothingMode) -> &'static str {
    match mode {
        SmoothingMode::Recursive => "recursive",
        SmoothingMode::RawPredecessor => "raw-predecessor",
    }
}

pub struct Curves {
    pub smoothed: SmoothedSeries,
    pub cqi: CqiSeries,
}

pub fn curves(series: &LossSeries, opts: &AnalysisOptions) -> Result<Curves, AnalysisError> {
    let smoothed = fmce_core::smooth(series, &opts.smoothing)?;
    let cqi = cqi(&smoothed, &opts.cqi)?;
    Ok(Curves { smoothed, cqi })
}

pub fn plan(series: &LossSeries, curves: &Curves, opts: &AnalysisOptions) -> Result<PhasePlan, AnalysisError> {
    opts.phases.validate()?;
    plan_phases(series, &curves.smoothed, &curves.cqi, &opts.phases)
}

/// JSON form of a phase plan with the settings that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanReport {
    pub run_id: String,
    pub alpha: f64,
    pub mode: String,
    pub window: usize,
    pub mu: f64,
    pub k: usize,
    pub baseline_epoch: usize,
    pub convergence_epoch: usize,
    pub markers: Vec<usize>,
    pub total_drop: f64,
    pub per_phase_drop: f64,
}

impl PlanReport {
    pub fn new(run_id: &str, opts: &AnalysisOptions, plan: &PhasePlan) -> Self {
        Self {
            run_id: run_id.to_string(),
            alpha: opts.smoothing.alpha,
            mode: mode_name(opts.smoothing.mode).to_string(),
            window: opts.cqi.window,
            mu: opts.cqi.threshold,
            k: opts.phases.k,
            baseline_epoch: plan.baseline_epoch,
            convergence_epoch: plan.convergence_epoch,
            markers: plan.markers.clone(),
            total_drop: plan.total_drop,
            per_phase_drop: plan.per_phase_drop,
        }
    }
}

/// `epoch,raw,smoothed,log_smoothed,cqi`; epoch 1 has no CQI and a
/// non-positive smoothed value has no log.
pub fn curves_csv(series: &LossSeries, curves: &Curves) -> String {
    let logs = log_transform(&curves.smoothed).ok();
    let mut s = String::from("epoch,raw,smoothed,log_smoothed,cqi\n");
    for (i, (&raw, &sm)) in series.values().iter().zip(curves.smoothed.values()).enumerate() {
        let epoch = i + 1;
        let log = logs.as_ref().map(|l| l[i].to_string()).unwrap_or_default();
        let c = curves.cqi.at(epoch).map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{epoch},{raw},{sm},{log},{c}");
    }
    s
}

pub fn emit_curves(dir: &Path, series: &LossSeries, curves: &Curves) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(Error::io(dir))?;
    let path = dir.join("curves.csv");
    std::fs::write(&path, curves_csv(series, curves)).map_err(Error::io(&path))
}
