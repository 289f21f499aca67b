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

    #[error("{path}: row {row}: {reason}")]
    Load {
        path: String,
        row: usize,
        reason: String,
    },

    #[error("{path}: malformed header: {reason}")]
    Header { path: String, reason: String },

    #[error("invalid dataset: {0}")]
    Validation(String),

    #[error("class {0} appears in both the seen and unseen sets")]
    OverlappingClass(String),

    #[error("class {0} has a zero-norm semantic vector")]
    ZeroNorm(String),

    #[error("unknown class {0}")]
    UnknownClass(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument `{arg}`: {reason}")]
    InvalidArgument { arg: &'static str, reason: String },

    #[error("singular normal equations; use a ridge penalty lambda > 0")]
    Singular,

    #[error("non-finite training loss at epoch {epoch}; lower the learning rate")]
    Divergence { epoch: usize },

    #[error("{0}")]
    Undefined(String),

    #[error("prior estimation failed after {attempts} restarts: empty cluster")]
    DegenerateClustering { attempts: usize },

    #[error("benchmark construction infeasible after {attempts} attempts; try a larger semantic_dim or a smaller affinity_gap")]
    InfeasibleBenchmark { attempts: usize },

    #[error("model blob: {0}")]
    Blob(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(arg: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidArgument {
            arg,
            reason: reason.into(),
        }
    }
}

/// Tags an error with the pipeline stage that produced it.
pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T> StageExt<T> for Result<T> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })
    }
}
