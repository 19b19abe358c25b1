use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("lookup index {index} out of range for table with {size} rows")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("empty sequence")]
    EmptySequence,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward already ran on this record; reset gradients first")]
    BackwardTwice,

    #[error("build_loss is not deterministic: {first} vs {second}")]
    NonDeterministic { first: f64, second: f64 },

    #[error("conditional needs contrast set")]
    EmptyContrastSet,

    #[error("cannot sample cross-passage negatives")]
    NoCrossPassage,

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("non-finite loss at step {step}")]
    NonFinite { step: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("checkpoint version mismatch: expected {expected}, found {found}")]
    CheckpointVersion { expected: String, found: String },

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

    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Shape {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
