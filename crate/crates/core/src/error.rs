//! Error types shared across the crate.

use thiserror::Error;

use crate::types::TargetKind;

/// Errors produced by geometry, conversion, sampling, and probe routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("spectrum must contain at least one eigenvalue")]
    EmptySpectrum,

    #[error("eigenvalue must be finite and non-negative, got {0}")]
    InvalidEigenvalue(f64),

    #[error("corruption time must lie in [0, 1], got {0}")]
    InvalidTime(f64),

    #[error("degenerate mixture: lambda = {lambda}, t = {t} gives Var(z) = 0")]
    DegenerateMixture { lambda: f64, t: f64 },

    #[error("readout {from} -> {to} is undefined at t = {t}")]
    ForbiddenTime {
        from: TargetKind,
        to: TargetKind,
        t: f64,
    },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite state at integration step {step}")]
    NonFiniteState { step: usize },

    #[error("training loss diverged at step {step} (loss = {loss})")]
    Diverged { step: u64, loss: f64 },

    #[error("batch file is malformed: {0}")]
    MalformedBatchFile(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid_argument(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
