use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("non-finite value in {step} at iteration {iteration}")]
    NonFinite {
        step: &'static str,
        iteration: usize,
    },

    #[error("stale tape: parameters changed since the forward pass was recorded")]
    StaleTape,

    #[error("region graph: {0}")]
    Graph(String),

    #[error("image {path}: {msg}")]
    Image { path: PathBuf, msg: String },

    #[error("unsupported image format: {0}")]
    UnsupportedImage(String),

    #[error("report parse error at line {line}: {msg}")]
    Report { line: usize, msg: String },

    #[error("checkpoint decode error: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
