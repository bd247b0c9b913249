//! Command-line interface. Every command validates its numbers before doing
//! any work and reports failures through [`Error::exit_code`].

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use fmce_core::fmce::{evaluate, train_fmce, FmceConfig, FmceTrainConfig};
use fmce_core::fmcs::{build_fmcs_dataset, split};
use fmce_core::nn::{OptimizerConfig, OptimizerKind};
use fmce_core::original_task::{MIN_PER_CLASS, NOISE_SIGMA};
use fmce_core::{CqiConfig, PhaseConfig, SmoothingConfig, SmoothingMode};

use crate::analysis::{self, AnalysisOptions, PlanReport};
use crate::error::{Error, Result};
use crate::exec::ThreadPool;
use crate::model_io::{self, MetricsReport, TrainingSettings};
use crate::pipeline::{self, PipelineConfig};
use crate::trace::{self, Trace, TraceConfig};
use crate::{fmcs_file, gradcam_out, loss_log, read_json, sha256_hex, write_json};

#[derive(Debug, Parser)]
#[command(name = "fmce", version, about = "Loss-curve phase analysis, FMCS datasets and FMCE-Net")]
#[command(after_help = "Set FMCE_THREADS to cap the number of worker threads (results do not depend on it).")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Smooth a loss log, detect convergence and place the K epoch markers
    Analyze(AnalyzeArgs),
    /// Train the original-task classifier and record a trace directory
    TrainOriginal(TrainOriginalArgs),
    /// Build an FMCS dataset from a trace and a plan report
    Dataset(DatasetArgs),
    /// Train FMCE-Net on an FMCS dataset
    TrainFmce(TrainFmceArgs),
    /// Evaluate a trained FMCE-Net
    EvalFmce(EvalFmceArgs),
    /// Write Grad-CAM heatmaps for selected samples
    Gradcam(GradcamArgs),
    /// Run every stage at desk scale
    Pipeline(PipelineArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Recursive,
    RawPredecessor,
}

impl From<ModeArg> for SmoothingMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Recursive => SmoothingMode::Recursive,
            ModeArg::RawPredecessor => SmoothingMode::RawPredecessor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

fn optimizer(kind: OptimizerArg, lr: f32) -> Result<OptimizerConfig> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Invalid(format!("learning rate must be positive, got {lr}")));
    }
    let kind = match kind {
        OptimizerArg::Adam => OptimizerKind::adam(),
        OptimizerArg::Sgd => OptimizerKind::Sgd,
    };
    Ok(OptimizerConfig { kind, learning_rate: lr })
}

fn at_least(name: &str, v: usize, min: usize) -> Result<()> {
    if v < min {
        return Err(Error::Invalid(format!("{name} must be at least {min}, got {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    /// Loss log: `epoch,loss` CSV with header, or JSON lines
    #[arg(long)]
    pub loss: PathBuf,
    /// Smoothing factor
    #[arg(long, default_value_t = 0.85)]
    pub alpha: f64,
    /// Smoothing recurrence
    #[arg(long, value_enum, default_value_t = ModeArg::Recursive)]
    pub mode: ModeArg,
    /// CQI moving-average window B
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Convergence threshold on the CQI
    #[arg(long, default_value_t = 1e-4)]
    pub mu: f64,
    /// Number of phases K
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    /// Plan report path; standard output when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for curves.csv (raw, smoothed, log-smoothed, CQI)
    #[arg(long)]
    pub emit_curves: Option<PathBuf>,
}

impl AnalyzeArgs {
    pub fn options(&self) -> Result<AnalysisOptions> {
        let opts = AnalysisOptions {
            smoothing: SmoothingConfig { alpha: self.alpha, mode: self.mode.into() },
            cqi: CqiConfig { window: self.window, threshold: self.mu },
            phases: PhaseConfig { k: self.k },
        };
        opts.smoothing.validate()?;
        opts.cqi.validate()?;
        opts.phases.validate()?;
        Ok(opts)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainOriginalArgs {
    /// Trace directory to create
    #[arg(long)]
    pub out: PathBuf,
    /// Initialisation and shuffling seed
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Data generation seed; defaults to --seed
    #[arg(long)]
    pub data_seed: Option<u64>,
    /// Images per class (train gets three quarters)
    #[arg(long, default_value_t = 500)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
}

#[derive(Debug, Clone, Args)]
pub struct DatasetArgs {
    /// Trace directory from train-original
    #[arg(long)]
    pub trace: PathBuf,
    /// Plan report from analyze
    #[arg(long)]
    pub plan: PathBuf,
    /// Output directory for dataset.fmcs and manifest.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct TrainFmceArgs {
    /// FMCS dataset file
    #[arg(long)]
    pub dataset: PathBuf,
    /// Output directory for model.fmck, model.json and loss.csv
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 20)]
    pub epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    pub optimizer: OptimizerArg,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    /// Initialisation and shuffling seed
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Seed of the 3:1 train/test split; defaults to --seed
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Feed raw feature maps instead of per-channel standardised ones
    #[arg(long)]
    pub no_normalize: bool,
    /// Inputs with more channels get a leading reducing conv
    #[arg(long, default_value_t = 1024)]
    pub channel_budget: usize,
    /// Allow a single stage when the grid can only be halved once
    #[arg(long)]
    pub allow_single_stage: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Test,
    Train,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct EvalFmceArgs {
    /// Model directory from train-fmce
    #[arg(long)]
    pub model: PathBuf,
    /// FMCS dataset file
    #[arg(long)]
    pub dataset: PathBuf,
    /// Which part of the split to score
    #[arg(long, value_enum, default_value_t = SplitArg::Test)]
    pub split: SplitArg,
    /// Metrics report path; standard output when omitted
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GradcamArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub dataset: PathBuf,
    /// Dataset sample indices, comma separated
    #[arg(long, value_delimiter = ',', required = true)]
    pub samples: Vec<usize>,
    /// Score to explain; each sample's own label when omitted
    #[arg(long)]
    pub target: Option<usize>,
    /// Output directory for the PGM files and index.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Args)]
pub struct PipelineArgs {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Run directory
    #[arg(long)]
    pub out: PathBuf,
    /// Number of phases K
    #[arg(long, default_value_t = 5)]
    pub k: usize,
    /// Original-task epochs M
    #[arg(long, default_value_t = 60)]
    pub epochs: usize,
    #[arg(long, default_value_t = 500)]
    pub n_per_class: usize,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f32,
    #[arg(long, default_value_t = 0.85)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value_t = ModeArg::Recursive)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 10)]
    pub window: usize,
    /// Convergence threshold on the CQI
    #[arg(long, default_value_t = 1e-3)]
    pub mu: f64,
    #[arg(long, default_value_t = 20)]
    pub fmce_epochs: usize,
    #[arg(long, default_value_t = 64)]
    pub fmce_batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub fmce_lr: f32,
    /// Feed raw feature maps to FMCE-Net
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long, default_value_t = 1024)]
    pub channel_budget: usize,
    /// Grad-CAM heatmaps per score, taken from the test split
    #[arg(long, default_value_t = 1)]
    pub gradcam_per_label: usize,
}

impl PipelineArgs {
    pub fn config(&self) -> PipelineConfig {
        PipelineConfig {
            seed: self.seed,
            k: self.k,
            epochs: self.epochs,
            n_per_class: self.n_per_class,
            batch_size: self.batch_size,
            lr: self.lr,
            alpha: self.alpha,
            raw_predecessor: self.mode == ModeArg::RawPredecessor,
            window: self.window,
            mu: self.mu,
            fmce_epochs: self.fmce_epochs,
            fmce_batch_size: self.fmce_batch_size,
            fmce_lr: self.fmce_lr,
            normalize: !self.no_normalize,
            channel_budget: self.channel_budget,
            gradcam_per_label: self.gradcam_per_label,
        }
    }

    /// Command line that reproduces `cfg` with run directory `out`.
    pub fn argv(cfg: &PipelineConfig, out: &Path) -> Vec<String> {
        let mut v: Vec<String> = vec!["pipeline".into(), "--out".into(), out.display().to_string()];
        let mut push = |name: &str, value: String| {
            v.push(format!("--{name}"));
            v.push(value);
        };
        push("seed", cfg.seed.to_string());
        push("k", cfg.k.to_string());
        push("epochs", cfg.epochs.to_string());
        push("n-per-class", cfg.n_per_class.to_string());
        push("batch-size", cfg.batch_size.to_string());
        push("lr", cfg.lr.to_string());
        push("alpha", cfg.alpha.to_string());
        push("mode", if cfg.raw_predecessor { "raw-predecessor" } else { "recursive" }.into());
        push("window", cfg.window.to_string());
        push("mu", cfg.mu.to_string());
        push("fmce-epochs", cfg.fmce_epochs.to_string());
        push("fmce-batch-size", cfg.fmce_batch_size.to_string());
        push("fmce-lr", cfg.fmce_lr.to_string());
        push("channel-budget", cfg.channel_budget.to_string());
        push("gradcam-per-label", cfg.gradcam_per_label.to_string());
        if !cfg.normalize {
            v.push("--no-normalize".into());
        }
        v
    }
}

fn emit_json<T: serde::Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let mut s = serde_json::to_string_pretty(value).map_err(Error::json("<stdout>"))?;
            s.push('\n');
            std::io::stdout().write_all(s.as_bytes()).map_err(Error::io("<stdout>"))
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Analyze(a) => cmd_analyze(&a),
        Command::TrainOriginal(a) => cmd_train_original(&a),
        Command::Dataset(a) => cmd_dataset(&a),
        Command::TrainFmce(a) => cmd_train_fmce(&a),
        Command::EvalFmce(a) => cmd_eval_fmce(&a),
        Command::Gradcam(a) => cmd_gradcam(&a),
        Command::Pipeline(a) => cmd_pipeline(&a),
    }
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let opts = a.options()?;
    let series = loss_log::read(&a.loss)?;
    let curves = analysis::curves(&series, &opts)?;
    if let Some(dir) = &a.emit_curves {
        analysis::emit_curves(dir, &series, &curves)?;
    }
    let plan = analysis::plan(&series, &curves, &opts)?;
    emit_json(a.out.as_deref(), &PlanReport::new(series.run_id(), &opts, &plan))
}

pub fn cmd_train_original(a: &TrainOriginalArgs) -> Result<()> {
    at_least("epochs", a.epochs, 1)?;
    at_least("batch-size", a.batch_size, 1)?;
    at_least("n-per-class", a.n_per_class, MIN_PER_CLASS)?;
    let cfg = TraceConfig {
        data_seed: a.data_seed.unwrap_or(a.seed),
        n_per_class: a.n_per_class,
        noise_sigma: NOISE_SIGMA,
        train_seed: a.seed,
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer: optimizer(a.optimizer, a.lr)?.into(),
    };
    let exec = ThreadPool::from_env()?;
    let (_, losses) = trace::record(&a.out, &cfg, &exec)?;
    eprintln!("trained {} epochs, final loss {}", losses.len(), losses[losses.len() - 1]);
    Ok(())
}

pub fn cmd_dataset(a: &DatasetArgs) -> Result<()> {
    let plan: PlanReport = read_json(&a.plan)?;
    if plan.markers.len() < 2 || plan.markers.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Invalid(format!("{}: markers must be at least two increasing epochs", a.plan.display())));
    }
    let trace = Trace::open(&a.trace);
    let data = trace.config()?.dataset()?;
    let exec = ThreadPool::from_env()?;
    let dataset =
        build_fmcs_dataset(&plan.markers, |k, e| pipeline::load_backbone(&trace, k, e), &data.train.images, &exec)?;
    std::fs::create_dir_all(&a.out).map_err(Error::io(&a.out))?;
    let sha = fmcs_file::save(&a.out.join("dataset.fmcs"), &dataset)?;
    write_json(&a.out.join("manifest.json"), &pipeline::manifest(&dataset, &plan, &trace, &sha)?)?;
    eprintln!("wrote {} samples, label counts {:?}", dataset.len(), dataset.label_histogram());
    Ok(())
}

fn load_dataset(path: &Path) -> Result<(fmce_core::fmcs::FmcsDataset, String)> {
    let bytes = std::fs::read(path).map_err(Error::io(path))?;
    let ds = fmcs_file::decode(&bytes).map_err(Error::format(path))?;
    Ok((ds, sha256_hex(&bytes)))
}

pub fn cmd_train_fmce(a: &TrainFmceArgs) -> Result<()> {
    at_least("batch-size", a.batch_size, 1)?;
    let (dataset, sha) = load_dataset(&a.dataset)?;
    let split_seed = a.split_seed.unwrap_or(a.seed);
    let s = split(&dataset, split_seed)?;
    let cfg = FmceTrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        optimizer: optimizer(a.optimizer, a.lr)?,
        seed: a.seed,
        normalize: !a.no_normalize,
        architecture: FmceConfig { channel_budget: a.channel_budget, allow_single_stage: a.allow_single_stage },
    };
    let exec = ThreadPool::from_env()?;
    let (model, losses) = train_fmce(&dataset, &s, &cfg, &exec)?;
    let settings = TrainingSettings {
        epochs: cfg.epochs,
        batch_size: cfg.batch_size,
        optimizer: cfg.optimizer.into(),
        seed: cfg.seed,
        split_seed,
        normalize: cfg.normalize,
    };
    model_io::save(&a.out, &model, &model_io::meta_for(&model, &cfg.architecture, settings, &sha))?;
    loss_log::write(&a.out.join("loss.csv"), &losses)?;
    Ok(())
}

pub fn cmd_eval_fmce(a: &EvalFmceArgs) -> Result<()> {
    let (model, meta) = model_io::load(&a.model)?;
    let (dataset, sha) = load_dataset(&a.dataset)?;
    let indices = match a.split {
        SplitArg::All => (0..dataset.len()).collect(),
        SplitArg::Test => split(&dataset, meta.training.split_seed)?.test,
        SplitArg::Train => split(&dataset, meta.training.split_seed)?.train,
    };
    let exec = ThreadPool::from_env()?;
    let m = evaluate(&model, &exec, &dataset, &indices)?;
    let name = match a.split {
        SplitArg::Test => "test",
        SplitArg::Train => "train",
        SplitArg::All => "all",
    };
    emit_json(a.out.as_deref(), &MetricsReport::new(&m, name, &meta, &sha))
}

pub fn cmd_gradcam(a: &GradcamArgs) -> Result<()> {
    let (model, _) = model_io::load(&a.model)?;
    let (dataset, _) = load_dataset(&a.dataset)?;
    gradcam_out::write_heatmaps(&a.out, &model, &dataset, &a.samples, a.target)?;
    Ok(())
}

pub fn cmd_pipeline(a: &PipelineArgs) -> Result<()> {
    let cfg = a.config();
    cfg.validate()?;
    let exec = ThreadPool::from_env()?;
    let s = pipeline::run(&cfg, &a.out, &exec)?;
    eprintln!(
        "markers {:?}; FMCE test accuracy {:.4} precision {:.4} recall {:.4} f1 {:.4}",
        s.plan.markers, s.metrics.accuracy, s.metrics.precision, s.metrics.recall, s.metrics.f1
    );
    Ok(())
}
