use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest {path}, line {line}: {msg}")]
    Manifest {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in snapshot column {column} (row {row})")]
    NonFinite { column: usize, row: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("time {t} outside the modelled range [{t_min}, {t_max}]")]
    OutOfRange { t: f64, t_min: f64, t_max: f64 },

    #[error("no snapshot falls in [{t_a}, {t_b})")]
    EmptyInterval { t_a: f64, t_b: f64 },

    #[error("requested rank {requested} exceeds numerical rank {rank}")]
    RankTooLarge { requested: usize, rank: usize },

    #[error("solver became unstable at t = {t}: |p - p0| = {amplitude}")]
    Unstable { t: f64, amplitude: f64 },

    #[error("source position invalid: {0}")]
    Source(String),

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("non-finite gradient")]
    NonFiniteGradient,

    #[error("interval {interval}: {source}")]
    Interval {
        interval: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("parameter mu = {mu}: {source}")]
    Parameter {
        mu: f64,
        #[source]
        source: Box<Error>,
    },

    #[error("model file: {0}")]
    ModelFormat(String),

    #[error("unsupported model format version {found} (expected major {expected})")]
    Version { found: String, expected: u32 },

    #[error("digest mismatch: {0}")]
    Digest(String),

    #[error("config: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_interval(self, interval: usize) -> Self {
        Error::Interval {
            interval,
            source: Box::new(self),
        }
    }
}
