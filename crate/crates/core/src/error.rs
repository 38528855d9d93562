//! Error types, one enum per module.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum QuantumError {
    #[error("all four counts are zero")]
    ZeroTotal,
    #[error("same-outcome or different-outcome group is empty")]
    ZeroGroup,
    #[error("counts must be finite and non-negative")]
    NegativeCount,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("normal matrix is singular")]
    SingularJacobian,
    #[error("model is degenerate: {0}")]
    DegenerateFit(String),
    #[error("no peak above floor {floor:.1} (max bin {max:.1})")]
    NoPeak { floor: f64, max: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BellError {
    #[error("no run for setting alpha={alpha_deg} deg, beta={beta_deg} deg")]
    MissingRun { alpha_deg: f64, beta_deg: f64 },
    #[error("run durations differ by more than 10% ({min} s vs {max} s)")]
    DurationMismatch { min: f64, max: f64 },
    #[error("insufficient statistics: {0}")]
    InsufficientStatistics(String),
    #[error(transparent)]
    Quantum(#[from] QuantumError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: bad magic \"{}\", expected \"PXE1\"", .found.escape_ascii())]
    BadMagic { path: PathBuf, found: [u8; 4] },
    #[error("{path}: unsupported format version {version}")]
    VersionUnsupported { path: PathBuf, version: u16 },
    #[error("{path}: truncated at byte {offset}, expected {expected} bytes")]
    TruncatedFile {
        path: PathBuf,
        offset: u64,
        expected: u64,
    },
    #[error("{path}: {extra} unexpected bytes after the last record at byte {offset}")]
    TrailingData {
        path: PathBuf,
        offset: u64,
        extra: u64,
    },
    #[error("{path}: invalid record at byte {offset}: {reason}")]
    InvalidRecord {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{path}: invalid header: {reason}")]
    InvalidHeader { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },
}

impl IoError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        IoError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        IoError::Parse {
            path: path.into(),
            reason: reason.to_string(),
        }
    }
}
