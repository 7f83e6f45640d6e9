//! Error taxonomy shared by every module in the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid construction rejected the requested discretization.
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    /// A named preset does not exist.
    #[error("unknown preset '{name}', valid choices: {valid}")]
    UnknownPreset { name: String, valid: String },

    /// Two fields that must live on the same grid or fiber disagree in shape.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A documented invariant failed at runtime (non-SPD sample, non-finite entry, ...).
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// Operation asked for on a tensor rank it does not support.
    #[error("unsupported covariant rank {rank} for {op}")]
    UnsupportedRank { rank: usize, op: &'static str },

    /// A numeric parameter left its admissible range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// The time stepper detected blow-up beyond the admissible growth envelope.
    #[error("stepper failure: {message} ({diagnostics})")]
    StepperFailure { message: String, diagnostics: String },

    /// L2 energy fell below the threshold under which the frequency quotient is undefined.
    #[error("frequency undefined: energy {energy:.3e} below threshold {threshold:.3e}")]
    UndefinedFrequency { energy: f64, threshold: f64 },

    /// Data leaks out of the region an experiment requires it to stay in.
    #[error("support violation: {0}")]
    SupportViolation(String),

    /// Cutoff or weight geometry collides with the periodic seam.
    #[error("configuration error: {0}")]
    SeamCollision(String),

    /// Time sampling too coarse for a finite-difference-in-time audit.
    #[error("time sampling too coarse: {0}")]
    TimeSamplingTooCoarse(String),

    /// Malformed run configuration.
    #[error("config error: {0}")]
    Config(String),
}
