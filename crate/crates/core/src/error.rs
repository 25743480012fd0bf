use std::fmt;
use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

/// Pipeline stage attached to errors raised during training, synthesis or evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Load,
    Spectra,
    Pca,
    Regression,
    Delays,
    Synthesis,
    Evaluation,
    Features,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Stage::Load => "load",
            Stage::Spectra => "spectra",
            Stage::Pca => "pca",
            Stage::Regression => "regression",
            Stage::Delays => "delays",
            Stage::Synthesis => "synthesis",
            Stage::Evaluation => "evaluation",
            Stage::Features => "features",
        };
        f.write_str(s)
    }
}

#[derive(thiserror::Error, Debug)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed manifest {path}: {msg}")]
    Manifest { path: PathBuf, msg: String },
    #[error("size mismatch in {what}: expected {expected} values, found {found}")]
    SizeMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("non-finite sample in {what} at index {index}")]
    NonFinite { what: String, index: usize },
    #[error("duplicate or out-of-order direction: {0}")]
    Direction(String),
    #[error("anthropometry {path}: {msg}")]
    Anthropometry { path: PathBuf, msg: String },
    #[error("unit mismatch for column {column}: expected '{expected}', found '{found}'")]
    Unit {
        column: String,
        expected: String,
        found: String,
    },
    #[error("subject '{subject}' is missing feature {feature}")]
    MissingFeature { subject: String, feature: String },
    #[error("subject mismatch: {0}")]
    SubjectMismatch(String),
    #[error("model file format error: {0}")]
    Format(String),
    #[error("model file version mismatch: expected {expected}, found {found}")]
    Version { expected: String, found: String },
    #[error("n_fft must be a power of two, got {0}")]
    NotPowerOfTwo(usize),
    #[error("n_fft {n_fft} is shorter than the signal length {len}")]
    FftTooShort { n_fft: usize, len: usize },
    #[error("signal is all zeros")]
    ZeroSignal,
    #[error("empty input: {0}")]
    Empty(String),
    #[error("negative or non-finite delay {0}")]
    NegativeDelay(f64),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("eigendecomposition did not converge after {sweeps} sweeps (off-diagonal norm {off_norm:e})")]
    NoConvergence { sweeps: usize, off_norm: f64 },
    #[error("design matrix is rank deficient (smallest pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("at least {required} subjects are required, got {found}")]
    InsufficientSubjects { required: usize, found: usize },
    #[error("zero variance in {0}")]
    ZeroVariance(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("regression cell (ear {ear}, direction {direction}, pc {pc}): {source}")]
    Cell {
        ear: usize,
        direction: usize,
        pc: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("{stage} stage: {source}")]
    InStage {
        stage: Stage,
        #[source]
        source: Box<Error>,
    },
    #[error("JSON error in {context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad input files or arguments rather than by the computation.
    pub fn is_input_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Manifest { .. }
            | Error::SizeMismatch { .. }
            | Error::NonFinite { .. }
            | Error::Direction(_)
            | Error::Anthropometry { .. }
            | Error::Unit { .. }
            | Error::MissingFeature { .. }
            | Error::SubjectMismatch(_)
            | Error::Format(_)
            | Error::Version { .. }
            | Error::Json { .. }
            | Error::Config(_)
            | Error::Empty(_) => true,
            Error::InStage { source, .. } | Error::Cell { source, .. } => source.is_input_error(),
            _ => false,
        }
    }

    /// Innermost error, skipping stage and cell wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::InStage { source, .. } | Error::Cell { source, .. } => source.root(),
            e => e,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: Stage) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: Stage) -> Result<T> {
        self.map_err(|e| match e {
            e @ Error::InStage { .. } => e,
            e => Error::InStage {
                stage,
                source: Box::new(e),
            },
        })
    }
}
