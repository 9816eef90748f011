use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("value out of range: {0}")]
    Range(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("ingestion error: missing or unreadable image {}", .0.display())]
    MissingImage(PathBuf),
    #[error("training error: {0}")]
    Training(String),
    #[error("numerical failure at step {step}: {what}")]
    Numerical { step: u64, what: String },
    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(String),
    #[error("inversion failed: {0}")]
    Inversion(String),
    #[error("io error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("image codec error: {0}")]
    Image(#[from] image::ImageError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// True for failures caused by numerics rather than data or usage.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::Numerical { .. } | Error::Inversion(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
