use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum QprecError {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A configuration field is missing or inconsistent.
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: String, reason: String },

    /// A Monte-Carlo draw produced a zero norm even after resampling.
    #[error("degenerate draw ({what}) persisted after {attempts} attempts")]
    DegenerateDraw { what: String, attempts: usize },

    /// The quantizer output has zero second moment at the requested scale.
    #[error("degenerate quantizer: E|q(alpha Z)|^2 = 0")]
    DegenerateQuantizer,

    /// A plug-in SINR estimate has a nonpositive denominator.
    #[error("unstable SINR estimate: signal = {signal:.6e}, total power = {power:.6e}")]
    UnstableEstimate { signal: f64, power: f64 },

    /// A hypothesis of a bound is not met.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    /// The dimension is not above the cascade threshold, so the bound is not asserted.
    #[error("K = {k} does not exceed the threshold K_hat = {k_hat:.3e}")]
    BelowThreshold { k: f64, k_hat: f64 },

    /// Every grid point of an optimization failed.
    #[error("no feasible grid point")]
    NoFeasiblePoint,

    /// Numerical evaluation failed (nonfinite integrand, no convergence).
    #[error("numerical evaluation failed: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, QprecError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(QprecError::InvalidInput(msg.into()))
}
