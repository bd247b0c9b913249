//! Convergence quantification for training runs and feature-map convergence scoring.
//!
//! The crate is `no_std` (with `alloc`) and holds every algorithm of the framework:
//!
//! - [`loss_analysis`]: smoothing, first differences and the windowed convergence
//!   quantification indicator (CQI) over a per-epoch loss sequence.
//! - [`phase_segmentation`]: log-loss phase planning and epoch markers.
//! - [`nn`]: a small deterministic tensor/layer engine with analytic backward passes.
//! - [`original_task`]: the procedural image task whose training run is analysed.
//! - [`fmcs`]: the labelled feature-map dataset built from marker checkpoints.
//! - [`fmce`]: the evaluation network, its normaliser and Grad-CAM.
//! - [`metrics`]: confusion matrix and macro-averaged classification metrics.
//!
//! File formats, process-level parallelism and the command-line tool live in the
//! companion `fmce` crate.

#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod fmce;
pub mod fmcs;
pub mod loss_analysis;
pub mod metrics;
pub mod nn;
pub mod original_task;
pub mod phase_segmentation;
pub mod rng;

pub use loss_analysis::{
    cqi, first_difference, smooth, AnalysisError, CqiConfig, CqiSeries, LossSeries, SmoothedSeries,
    SmoothingConfig, SmoothingMode,
};
pub use phase_segmentation::{log_transform, plan_phases, plan_phases_at, PhaseConfig, PhasePlan};
