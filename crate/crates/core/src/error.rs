use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum ElfError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid data: {0}")]
    Data(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("partition left the {0} set empty")]
    EmptyPartition(&'static str),

    #[error("not enough samples: need {needed}, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("sample {value} lies outside the bound range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl ElfError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ElfError::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical machinery rather than of inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, ElfError::Numeric(_))
    }
}

pub type Result<T> = std::result::Result<T, ElfError>;
