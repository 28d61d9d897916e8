use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {layer}: expected {expected}, got {actual}")]
    Dimension {
        layer: String,
        expected: usize,
        actual: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("beta must lie in [0, 1], got {0}")]
    BetaOutOfRange(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("trim count h = {h} exceeds the number of residuals n = {n}")]
    TrimTooLarge { h: usize, n: usize },

    #[error("C-constant C_({i},{j}) at beta = {beta} did not converge")]
    Quadrature { i: u32, j: u32, beta: f64 },

    #[error("non-finite loss in the scale update; last valid sigma = {last_sigma}")]
    NonFiniteLoss { last_sigma: f64 },

    #[error("operation `{op}` is only available for the {required} error model")]
    UnsupportedModel { op: &'static str, required: &'static str },

    #[error("degenerate influence normalizer: C~_(2,2) = {0}")]
    DegenerateNormalizer(f64),

    #[error("{0} is outside the domain of the target function")]
    OutOfDomain(String),

    #[error("parse error at {path}:{row}:{column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: String,
        message: String,
    },

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
