use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid basis: {0}")]
    InvalidBasis(String),

    #[error("coordinate {value} outside [0, 1]{}", row.map(|r| format!(" (row {r})")).unwrap_or_default())]
    OutOfDomain { value: f64, row: Option<usize> },

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("empty data: {0}")]
    EmptyData(String),

    #[error("penalty structure: {0}")]
    Penalty(String),

    #[error("prior scaling failed: {0}")]
    Scaling(String),

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("degenerate fit: {0}")]
    DegenerateFit(String),

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("input data: {0}")]
    Data(String),

    #[error("artifact mismatch: {0}")]
    Artifact(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for numerical breakdown, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NumericalBreakdown(_) | Error::DegenerateFit(_) => 2,
            _ => 1,
        }
    }
}
