use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        actual: usize,
    },

    #[error("non-finite value at row {row}, column {col}")]
    NonFiniteValue { row: usize, col: usize },

    #[error("unknown family name in labels: {0:?}")]
    UnknownFamily(String),

    #[error("label id {id} at row {row} is outside the family vocabulary of size {families}")]
    LabelOutOfRange { row: usize, id: i64, families: usize },

    #[error("malformed metadata: {0}")]
    MalformedMetadata(String),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("duplicate id {0} in index")]
    DuplicateId(usize),

    #[error("k = {k} exceeds the {available} searchable vectors")]
    KTooLarge { k: usize, available: usize },

    #[error("parameters are frozen")]
    Frozen,

    #[error("model must be frozen before building embeddings")]
    NotFrozen,

    #[error("non-finite loss at epoch {epoch}, batch {batch}: {detail}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("non-finite gradient in parameter tensor {0}")]
    NonFiniteGradient(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("mixing coefficient {0} outside [0, 1]")]
    AlphaOutOfRange(f64),

    #[error("labeled subset of {requested} rows cannot cover {families} families")]
    TooFewLabels { requested: usize, families: usize },

    #[error("family {0} has no labeled row")]
    MissingFamily(String),

    #[error("invalid label distribution: {0}")]
    InvalidDistribution(String),

    #[error("timestamp error: {0}")]
    Timestamp(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(context: impl Into<String>, expected: usize, actual: usize) -> Self {
        Error::DimensionMismatch {
            context: context.into(),
            expected,
            actual,
        }
    }
}
