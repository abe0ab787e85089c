use std::path::PathBuf;

use thiserror::Error;

use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("unknown {kind} '{name}'")]
    UnknownVocab { kind: &'static str, name: String },
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("template {template:?} does not fit in search region {region:?}")]
    TemplateLargerThanRegion { template: (usize, usize), region: (usize, usize) },
    #[error("dataset split '{0}' is empty")]
    EmptySplit(String),
    #[error("training diverged at step {step}: loss is not finite")]
    DivergedLoss { step: u64 },
    #[error("non-finite gradient for parameter '{param}'; step rejected")]
    NonFiniteGradient { param: String },
    #[error("evaluation set is empty")]
    EmptySet,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
