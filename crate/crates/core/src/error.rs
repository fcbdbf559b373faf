use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension must be at least 1")]
    ZeroDimension,
    #[error("basis of dim {dim} and order {order} needs {count} features, above the cap of {cap}")]
    TooManyFeatures {
        dim: usize,
        order: usize,
        count: u128,
        cap: usize,
    },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("grid needs at least 2 nodes, got {0}")]
    GridTooSmall(usize),
    #[error("full tensor grid limited to dim {max}, got {dim}; use a stochastic grid")]
    GridDimensionTooLarge { dim: usize, max: usize },
    #[error("natural parameter {index} is not finite ({value})")]
    NonFiniteParameter { index: usize, value: f64 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("optimization diverged at iteration {iteration}: {reason}")]
    Diverged { iteration: usize, reason: String },
    #[error("layout error at {location}: {message}")]
    Layout { location: String, message: String },
    #[error("format error: {0}")]
    Format(String),
    #[error("checkpoint shape mismatch: expected layers {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
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
}
