use std::path::PathBuf;

use thiserror::Error;

use crate::io::nifti::NiftiError;
use crate::volume::{LabelId, ValidationReport};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("invalid structure registry: {0}")]
    Registry(String),

    #[error("label id {0} is not in the structure registry")]
    UnknownLabel(LabelId),

    #[error("geometry mismatch ({context}): expected {expected}, found {found}")]
    GeometryMismatch {
        context: String,
        expected: String,
        found: String,
    },

    #[error("need N ≥ 2 Monte Carlo samples, got {0}")]
    TooFewSamples(usize),

    #[error("invalid Monte Carlo sample set:\n{0}")]
    InvalidSampleSet(ValidationReport),

    #[error("{0}")]
    InvalidInput(String),

    #[error("correlation undefined: {0} is constant")]
    ConstantVector(&'static str),

    #[error("not enough data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("design matrix is singular (condition estimate {condition:.3e}); collinear columns: {}", columns.join(", "))]
    Singular { columns: Vec<String>, condition: f64 },

    #[error("{}: {source}", path.display())]
    Nifti {
        path: PathBuf,
        #[source]
        source: NiftiError,
    },

    #[error("line {line}, column {column}: {message}")]
    Csv {
        line: u64,
        column: String,
        message: String,
    },

    #[error("JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the filesystem itself, as opposed to bad content or usage.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}
