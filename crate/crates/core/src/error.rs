use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("{what} out of range: {value} not in [{min}, {max}]")]
    OutOfRange { what: &'static str, value: usize, min: usize, max: usize },

    #[error("degenerate correspondence configuration: {0}")]
    Degenerate(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error in {path:?} at line {line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("parameter file: {0}")]
    Format(String),

    #[error("parameter file checksum mismatch (stored {stored:#010x}, computed {computed:#010x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("architecture mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite loss at epoch {epoch}, pair {pair}: {detail}")]
    NonFiniteLoss { epoch: usize, pair: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
