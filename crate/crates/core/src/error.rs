use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("expected a unit vector, got norm {norm}")]
    NonUnitVector { norm: f64 },

    #[error("relative velocity vanishes; the collision pair is degenerate")]
    DegeneratePair,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature order {0} is below the minimum of 2")]
    QuadratureOrder(usize),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("support mismatch: {0}")]
    SupportMismatch(String),

    #[error("kernel is singular on the diagonal (v = w)")]
    SingularDiagonal,

    #[error("time step too large: {0}")]
    TimeStepTooLarge(String),

    #[error("numerical fault at step {step} (rng word position {word_pos}): {detail}")]
    NumericalFault {
        step: u64,
        word_pos: u128,
        detail: String,
    },

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        iterations: usize,
        residual: f64,
        last: Vec<f64>,
    },

    #[error("identity check failed: {0}")]
    IdentityViolation(String),

    #[error("fit refused: {0}")]
    FitRefused(String),

    #[error("malformed table: {0}")]
    Table(String),

    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
