use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("{path}: length {len} bytes is not a multiple of the {record} byte record size")]
    Truncated { path: PathBuf, len: u64, record: usize },

    #[error("{path}: holds {actual} records but the manifest declares {declared}")]
    CountMismatch { path: PathBuf, declared: usize, actual: usize },

    #[error("non-finite value at record {record}, dim {dim}")]
    NonFinite { record: usize, dim: usize },

    #[error("manifest parse error at line {line}: {msg}")]
    ManifestParse { line: usize, msg: String },

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("memory budget too small: V_max = 0 (budget {memory_gb} GB, mean {mean_count} features/video)")]
    BudgetTooSmall { memory_gb: f64, mean_count: f64 },

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("input has rank below the requested {target} dimensions")]
    RankDeficient { target: usize },

    #[error("degenerate model: {0}")]
    Degenerate(String),

    #[error("solver did not converge within {steps} update steps")]
    NoConvergence { steps: u64 },

    #[error("bad file format: {0}")]
    Format(String),

    #[error("video {video_id}: {source}")]
    Video {
        video_id: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_video(self, video_id: &str) -> Self {
        Error::Video {
            video_id: video_id.to_string(),
            source: Box::new(self),
        }
    }
}
