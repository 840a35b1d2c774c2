//! Error type shared across the crate.

use crate::hilbert::BasisTag;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("basis mismatch: expected {expected:?}, found {found:?}")]
    BasisMismatch { expected: BasisTag, found: BasisTag },

    #[error("Hilbert dimension {dim} exceeds configured maximum {max}")]
    DimensionOverflow { dim: usize, max: usize },

    #[error("eigensolver failed: {0}")]
    Solver(String),

    #[error("index pair ({j}, {k}) out of range for dimension {dim}")]
    IndexOutOfRange { j: usize, k: usize, dim: usize },

    #[error("step size underflow at t = {t} ps (h = {h:e} ps)")]
    StepSizeUnderflow { t: f64, h: f64 },

    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    #[error(
        "superoperator for Hilbert dimension {dim} exceeds the memory budget \
         (cap {max}); lower m_levels or raise the cap"
    )]
    MemoryBudget { dim: usize, max: usize },

    #[error("window too short: {n} samples (need at least {min})")]
    WindowTooShort { n: usize, min: usize },

    #[error("unknown preset '{0}'")]
    UnknownPreset(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
