use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot normalize a zero vector (norm {norm:e})")]
    ZeroVector { norm: f64 },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("vector is not unit norm (norm {norm})")]
    NotUnitNorm { norm: f64 },

    #[error("invalid manifest: {0}")]
    ManifestInvalid(String),

    #[error("blob {file} has {actual} bytes, expected {expected}")]
    BlobSizeMismatch {
        file: String,
        expected: usize,
        actual: usize,
    },

    #[error("row {row} of {what} has norm {norm}, outside 1 +/- 1e-3")]
    NormViolation { what: String, row: usize, norm: f64 },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("io failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(
        "aggregation `none` requires exactly one description per class, class {class} has {count}"
    )]
    AggregationMismatch { class: usize, count: usize },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("not a probability distribution (sum {sum})")]
    NotADistribution { sum: f64 },

    #[error("budget {budget} exceeds pool of {pool}")]
    BudgetExceedsPool { budget: usize, pool: usize },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("empty input")]
    EmptyInput,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from dataset files or contents rather than from
    /// configuration or the run itself.
    pub fn is_dataset_error(&self) -> bool {
        matches!(
            self,
            Error::ManifestInvalid(_)
                | Error::BlobSizeMismatch { .. }
                | Error::NormViolation { .. }
                | Error::InvalidDataset(_)
                | Error::Io { .. }
        )
    }
}
