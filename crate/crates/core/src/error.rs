use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// `1 - t(1 - F^2)` vanished: the RMLE potential lost strict concavity.
    #[error("potential singular at p={p}, t={t} (denominator {denominator:e})")]
    Singular { p: f64, t: f64, denominator: f64 },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("divergence at iteration {iteration}: {detail}")]
    Divergence { iteration: usize, detail: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("out of range: {0}")]
    OutOfRange(String),
}
