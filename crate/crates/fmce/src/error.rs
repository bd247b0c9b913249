use std::fmt;
use std::io;
use std::path::PathBuf;

use fmce_core::fmce::FmceError;
use fmce_core::fmcs::FmcsError;
use fmce_core::nn::NnError;
use fmce_core::original_task::TaskError;
use fmce_core::AnalysisError;

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Generate,
    TrainOriginal,
    Analyze,
    BuildFmcs,
    TrainFmce,
    Evaluate,
    GradCam,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Generate,
        Stage::TrainOriginal,
        Stage::Analyze,
        Stage::BuildFmcs,
        Stage::TrainFmce,
        Stage::Evaluate,
        Stage::GradCam,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Generate => "generate",
            Stage::TrainOriginal => "train_original",
            Stage::Analyze => "analyze",
            Stage::BuildFmcs => "build_fmcs",
            Stage::TrainFmce => "train_fmce",
            Stage::Evaluate => "evaluate",
            Stage::GradCam => "grad_cam",
        }
    }

    /// Process exit code when this stage fails: 10 for generate up to 16.
    pub fn exit_code(self) -> i32 {
        10 + Stage::ALL.iter().position(|&s| s == self).unwrap_or(0) as i32
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Problems with one of the binary formats.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u32),
    #[error("file is truncated")]
    Truncated,
    #[error("{0} unexpected trailing bytes")]
    TrailingBytes(usize),
    #[error("checksum mismatch: stored {stored:016x}, computed {computed:016x}")]
    Checksum { stored: u64, computed: u64 },
    #[error("unknown layer tag {0}")]
    UnknownLayer(u8),
    #[error("refusing to write an empty dataset")]
    EmptyDataset,
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error("{}: {source}", path.display())]
    Format { path: PathBuf, source: FormatError },
    #[error("{}:{line}: {message}", path.display())]
    LossLog { path: PathBuf, line: usize, message: String },
    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
    #[error(transparent)]
    Engine(#[from] NnError),
    #[error(transparent)]
    Task(#[from] TaskError),
    #[error(transparent)]
    Fmcs(#[from] FmcsError),
    #[error(transparent)]
    Fmce(#[from] FmceError),
    #[error("stage {stage} failed: {source}")]
    Stage { stage: Stage, source: Box<Error> },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>) -> impl FnOnce(FormatError) -> Error {
        let path = path.into();
        move |source| Error::Format { path, source }
    }

    pub fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> Error {
        let path = path.into();
        move |source| Error::Json { path, source }
    }

    pub fn in_stage(self, stage: Stage) -> Error {
        match self {
            e @ Error::Stage { .. } => e,
            e => Error::Stage { stage, source: Box::new(e) },
        }
    }

    /// 2 unreadable loss log, 3 not converged, 4 no valid segmentation,
    /// 10-16 pipeline stage failures, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { stage, .. } => stage.exit_code(),
            Error::LossLog { .. } => 2,
            Error::Analysis(AnalysisError::NotConverged) => 3,
            Error::Analysis(
                AnalysisError::InfeasibleSegmentation { .. }
                | AnalysisError::DegenerateCurve { .. }
                | AnalysisError::ConvergedBeforeBaseline { .. },
            ) => 4,
            _ => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
