use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MsaError {
    #[error("dimension mismatch: expected d = {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("length mismatch for {what}: expected {expected}, got {actual}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("task mismatch: {0}")]
    TaskMismatch(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("infinite skewness: lambda[{index}] = {lambda} > 0 but sample proportion is 0")]
    InfiniteSkewness { index: usize, lambda: f64 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("tractability guard: {0}")]
    Intractable(String),

    #[error(
        "precondition failed: the min-max game needs a strictly convex loss \
         (strong_convexity_mu > 0) for its solution to coincide with LMSA over the whole simplex; got mu = {0}"
    )]
    NotStronglyConvex(f64),

    #[error("calibration failed after {iterations} iterations: {detail}")]
    Calibration { iterations: usize, detail: String },

    #[error("parse error in {path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, MsaError>;

impl MsaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MsaError::Io {
            path: path.into(),
            source,
        }
    }
}
