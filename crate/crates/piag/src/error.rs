//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("unstable step size {eta:e}: F_{k} = {f_k:e} exceeds divergence guard {guard:e}")]
    UnstableStepSize {
        eta: f64,
        k: usize,
        f_k: f64,
        guard: f64,
    },

    #[error("reference solver failed: {0}")]
    Oracle(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// Process exit code for the CLI: 1 check failure, 2 invalid input,
    /// 3 oracle failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Oracle(_) => 3,
            Error::UnstableStepSize { .. } => 1,
            _ => 2,
        }
    }
}
