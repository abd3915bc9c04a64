use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid model spec at layer {layer}: {reason}")]
    InvalidSpec { layer: usize, reason: String },

    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    TensorLength { shape: Vec<usize>, len: usize },

    #[error("parameter vector has {actual} values, spec requires {expected}")]
    ParamCount { expected: usize, actual: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("non-finite {what} at layer {layer}")]
    NonFinite { what: &'static str, layer: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("CIFAR-10 format error: {0}")]
    Format(String),

    #[error("model mismatch at layer {layer}: {reason}")]
    ModelMismatch { layer: usize, reason: String },

    #[error("node {node} has an empty assignment")]
    EmptyNode { node: usize },

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("probe failed at round {round} for {model}: {source}")]
    Probe {
        round: usize,
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("log parse error at line {line}: {reason}")]
    LogParse { line: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
