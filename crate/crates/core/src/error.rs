use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty image")]
    EmptyImage,

    #[error("image {width}x{height} is smaller than the {rows}x{cols} block grid")]
    ImageSmallerThanGrid {
        width: usize,
        height: usize,
        rows: usize,
        cols: usize,
    },

    #[error("histogram layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("inconsistent shots and frames: {0}")]
    InconsistentShots(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("covariance matrix is singular or not positive definite")]
    SingularCovariance,

    #[error("covariance matrix is not positive semidefinite (min eigenvalue {0})")]
    NotPositiveSemidefinite(f64),

    #[error("non-finite embedding component in segment {0}")]
    NonFinite(String),

    #[error("missing embedding for segment {0}")]
    MissingEmbedding(String),

    #[error("silhouette needs at least 2 instances, got {0}")]
    TooFewInstances(usize),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("segment {0} is not present in the reference")]
    UnknownSegment(String),

    #[error("nothing to score: {0}")]
    EmptyScoredRegion(&'static str),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Tags an error with the pipeline stage it came from.
    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
