//! End-to-end desk run: generate → train_original → analyze → build_fmcs →
//! train_fmce → evaluate → grad_cam.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fmce_core::fmce::{evaluate, train_fmce, FmceConfig, FmceTrainConfig};
use fmce_core::fmcs::{build_fmcs_dataset, split, FmcsError};
use fmce_core::nn::{Executor, OptimizerConfig};
use fmce_core::original_task::{OriginalTaskModel, NOISE_SIGMA};
use fmce_core::{CqiConfig, LossSeries, PhaseConfig, SmoothingConfig, SmoothingMode};
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisOptions, PlanReport};
use crate::error::{Error, Result, Stage};
use crate::fmcs_file::{self, Manifest};
use crate::gradcam_out::{self, HeatmapEntry};
use crate::model_io::{self, MetricsReport, TrainingSettings};
use crate::trace::{self, Trace, TraceConfig};
use crate::{loss_log, sha256_hex, write_json};

/// Every pipeline setting; written to `config.json` in the run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub seed: u64,
    pub k: usize,
    pub epochs: usize,
    pub n_per_class: usize,
    pub batch_size: usize,
    pub lr: f32,
    pub alpha: f64,
    pub raw_predecessor: bool,
    pub window: usize,
    pub mu: f64,
    pub fmce_epochs: usize,
    pub fmce_batch_size: usize,
    pub fmce_lr: f32,
    pub normalize: bool,
    pub channel_budget: usize,
    pub gradcam_per_label: usize,
}

impl PipelineConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            k: 5,
            epochs: 60,
            n_per_class: 500,
            batch_size: 64,
            lr: 1e-3,
            alpha: 0.85,
            raw_predecessor: false,
            window: 10,
            mu: 1e-3,
            fmce_epochs: 20,
            fmce_batch_size: 64,
            fmce_lr: 1e-3,
            normalize: true,
            channel_budget: 1024,
            gradcam_per_label: 1,
        }
    }

    pub fn analysis_options(&self) -> AnalysisOptions {
        AnalysisOptions {
            smoothing: SmoothingConfig {
                alpha: self.alpha,
                mode: if self.raw_predecessor { SmoothingMode::RawPredecessor } else { SmoothingMode::Recursive },
            },
            cqi: CqiConfig { window: self.window, threshold: self.mu },
            phases: PhaseConfig { k: self.k },
        }
    }

    pub fn trace_config(&self) -> TraceConfig {
        TraceConfig {
            data_seed: self.seed,
            n_per_class: self.n_per_class,
            noise_sigma: NOISE_SIGMA,
            train_seed: self.seed,
            epochs: self.epochs,
            batch_size: self.batch_size,
            optimizer: OptimizerConfig { learning_rate: self.lr, ..Default::default() }.into(),
        }
    }

    pub fn fmce_config(&self) -> FmceTrainConfig {
        FmceTrainConfig {
            epochs: self.fmce_epochs,
            batch_size: self.fmce_batch_size,
            optimizer: OptimizerConfig { learning_rate: self.fmce_lr, ..Default::default() },
            seed: self.seed,
            normalize: self.normalize,
            architecture: FmceConfig { channel_budget: self.channel_budget, allow_single_stage: false },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let opts = self.analysis_options();
        opts.smoothing.validate()?;
        opts.cqi.validate()?;
        opts.phases.validate()?;
        if self.k > 255 {
            return Err(Error::Invalid(format!("k must be at most 255, got {}", self.k)));
        }
        if self.epochs == 0 {
            return Err(Error::Invalid("epochs must be at least 1".into()));
        }
        if self.n_per_class < fmce_core::original_task::MIN_PER_CLASS {
            return Err(Error::Invalid(format!(
                "n-per-class must be at least {}, got {}",
                fmce_core::original_task::MIN_PER_CLASS,
                self.n_per_class
            )));
        }
        if self.batch_size == 0 || self.fmce_batch_size == 0 {
            return Err(Error::Invalid("batch sizes must be at least 1".into()));
        }
        for (name, lr) in [("lr", self.lr), ("fmce-lr", self.fmce_lr)] {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(Error::Invalid(format!("{name} must be positive, got {lr}")));
            }
        }
        if self.channel_budget < 2 {
            return Err(Error::Invalid("channel-budget must be at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OriginalSummary {
    pub epochs: usize,
    pub final_loss: f64,
    pub train_images: usize,
    pub test_images: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmcsSummary {
    pub samples: usize,
    pub label_counts: Vec<usize>,
    pub train_label_counts: Vec<usize>,
    pub test_label_counts: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FmceSummary {
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub stages: usize,
    pub parameters: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Seconds since the Unix epoch. The only field that varies between
    /// identical runs; artifact digests never cover it.
    pub generated_at: u64,
    pub seed: u64,
    pub config: PipelineConfig,
    pub original_task: OriginalSummary,
    pub plan: PlanReport,
    pub fmcs: FmcsSummary,
    pub fmce: FmceSummary,
    pub metrics: MetricSummary,
    pub gradcam: Vec<String>,
    /// Relative path → SHA-256 of every file in the run directory except
    /// `summary.json`.
    pub artifacts: BTreeMap<String, String>,
}

fn timed<T>(stage: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let start = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    if out.is_ok() {
        eprintln!("[{stage}] {:.1}s", start.elapsed().as_secs_f64());
    }
    out
}

fn mkdir(p: &Path) -> Result<()> {
    std::fs::create_dir_all(p).map_err(Error::io(p))
}

/// Runs every stage with `out` as the run directory and writes
/// `summary.json` there.
pub fn run<E: Executor>(cfg: &PipelineConfig, out: &Path, exec: &E) -> Result<Summary> {
    cfg.validate()?;
    mkdir(out)?;
    write_json(&out.join("config.json"), cfg)?;
    let trace_dir = out.join("trace");
    let trace_cfg = cfg.trace_config();

    let data = timed(Stage::Generate, || trace_cfg.dataset())?;

    let losses = timed(Stage::TrainOriginal, || trace::record_with(&trace_dir, &trace_cfg, &data, exec))?;

    let opts = cfg.analysis_options();
    let (plan, report) = timed(Stage::Analyze, || {
        let series = LossSeries::new("trace", losses.clone())?;
        let curves = analysis::curves(&series, &opts)?;
        let dir = out.join("analysis");
        analysis::emit_curves(&dir, &series, &curves)?;
        let plan = analysis::plan(&series, &curves, &opts)?;
        let report = PlanReport::new(series.run_id(), &opts, &plan);
        write_json(&dir.join("plan.json"), &report)?;
        Ok((plan, report))
    })?;

    let trace = Trace::open(&trace_dir);
    let fmcs_dir = out.join("fmcs");
    let (dataset, fmcs_sha, fmcs_split) = timed(Stage::BuildFmcs, || {
        let dataset = build_fmcs_dataset(&plan.markers, |k, e| load_backbone(&trace, k, e), &data.train.images, exec)?;
        mkdir(&fmcs_dir)?;
        let sha = fmcs_file::save(&fmcs_dir.join("dataset.fmcs"), &dataset)?;
        write_json(&fmcs_dir.join("manifest.json"), &manifest(&dataset, &report, &trace, &sha)?)?;
        let s = split(&dataset, cfg.seed)?;
        Ok((dataset, sha, s))
    })?;

    let fmce_dir = out.join("fmce");
    let fcfg = cfg.fmce_config();
    let (model, meta, fmce_losses) = timed(Stage::TrainFmce, || {
        let (model, losses) = train_fmce(&dataset, &fmcs_split, &fcfg, exec)?;
        let settings = TrainingSettings {
            epochs: fcfg.epochs,
            batch_size: fcfg.batch_size,
            optimizer: fcfg.optimizer.into(),
            seed: fcfg.seed,
            split_seed: fmcs_split.seed,
            normalize: fcfg.normalize,
        };
        let meta = model_io::meta_for(&model, &fcfg.architecture, settings, &fmcs_sha);
        model_io::save(&fmce_dir, &model, &meta)?;
        loss_log::write(&fmce_dir.join("loss.csv"), &losses)?;
        Ok((model, meta, losses))
    })?;

    let metrics = timed(Stage::Evaluate, || {
        let m = evaluate(&model, exec, &dataset, &fmcs_split.test)?;
        let dir = out.join("eval");
        mkdir(&dir)?;
        write_json(&dir.join("metrics.json"), &MetricsReport::new(&m, "test", &meta, &fmcs_sha))?;
        Ok(m)
    })?;

    let heatmaps: Vec<HeatmapEntry> = timed(Stage::GradCam, || {
        let mut picks = Vec::new();
        for label in 1..=dataset.k() {
            picks.extend(
                fmcs_split
                    .test
                    .iter()
                    .copied()
                    .filter(|&i| dataset.samples()[i].label as usize == label)
                    .take(cfg.gradcam_per_label),
            );
        }
        gradcam_out::write_heatmaps(&out.join("gradcam"), &model, &dataset, &picks, None)
    })?;

    let summary = Summary {
        generated_at: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        seed: cfg.seed,
        config: cfg.clone(),
        original_task: OriginalSummary {
            epochs: losses.len(),
            final_loss: losses[losses.len() - 1],
            train_images: data.train.len(),
            test_images: data.test.len(),
        },
        plan: report,
        fmcs: FmcsSummary {
            samples: dataset.len(),
            label_counts: dataset.label_histogram(),
            train_label_counts: dataset.histogram_of(&fmcs_split.train),
            test_label_counts: dataset.histogram_of(&fmcs_split.test),
            sha256: fmcs_sha,
        },
        fmce: FmceSummary {
            epochs: fmce_losses.len(),
            final_loss: fmce_losses.last().copied(),
            stages: model.architecture().stages,
            parameters: model.graph().parameter_count(),
        },
        metrics: MetricSummary {
            accuracy: metrics.accuracy,
            precision: metrics.precision,
            recall: metrics.recall,
            f1: metrics.f1,
        },
        gradcam: heatmaps.iter().map(|h| format!("gradcam/{}", h.file)).collect(),
        artifacts: digest_tree(out)?,
    };
    write_json(&out.join("summary.json"), &summary)?;
    Ok(summary)
}

/// Loads the backbone at `epoch` from a trace, mapping a missing file to
/// [`FmcsError::MissingCheckpoint`].
pub fn load_backbone(trace: &Trace, k: usize, epoch: usize) -> Result<OriginalTaskModel, FmcsError> {
    let path = trace.checkpoint_path(epoch);
    if !path.is_file() {
        return Err(FmcsError::MissingCheckpoint { k, epoch });
    }
    let graph = trace.load_checkpoint(epoch).map_err(|e| FmcsError::BadCheckpoint { epoch, reason: e.to_string() })?;
    Ok(OriginalTaskModel::from_graph(graph)?)
}

pub fn manifest(
    dataset: &fmce_core::fmcs::FmcsDataset,
    plan: &PlanReport,
    trace: &Trace,
    sha: &str,
) -> Result<Manifest> {
    Ok(Manifest {
        format: "FMCS".into(),
        version: fmcs_file::VERSION,
        k: dataset.k(),
        dims: model_io::dims3(dataset.dims()),
        samples: dataset.len(),
        label_counts: dataset.label_histogram(),
        baseline_epoch: plan.baseline_epoch,
        convergence_epoch: plan.convergence_epoch,
        markers: plan.markers.clone(),
        trace_config_digest: trace.config_digest()?,
        content_sha256: sha.to_string(),
    })
}

/// SHA-256 of every regular file under `root` except the top-level
/// `summary.json`, keyed by `/`-separated relative path.
pub fn digest_tree(root: &Path) -> Result<BTreeMap<String, String>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) -> Result<()> {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .map_err(Error::io(dir))?
            .collect::<std::io::Result<_>>()
            .map_err(Error::io(dir))?;
        entries.sort_by_key(|e| e.file_name());
        for e in entries {
            let path = e.path();
            if path.is_dir() {
                walk(root, &path, out)?;
            } else {
                let rel = path.strip_prefix(root).expect("inside root");
                let key = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
                if key == "summary.json" {
                    continue;
                }
                let bytes = std::fs::read(&path).map_err(Error::io(&path))?;
                out.insert(key, sha256_hex(&bytes));
            }
        }
        Ok(())
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out)?;
    Ok(out)
}
