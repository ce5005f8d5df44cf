use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An argument outside the domain on which the quantity is defined.
    #[error("domain error: {0}")]
    Domain(String),

    /// A computation that would exceed a configured size cap.
    #[error("resource limit exceeded: {what} = {requested} (cap {cap})")]
    Resource {
        what: &'static str,
        requested: usize,
        cap: usize,
    },

    /// An internal invariant was violated; indicates a bug rather than bad input.
    #[error("internal consistency failure: {0}")]
    Consistency(String),

    /// The state exchanges nothing with the bath, so no apparent temperature exists.
    #[error("apparent temperature undefined: state is dark (<J+J-> = {jpjm:e}, <J-J+> = {jmjp:e})")]
    DarkState { jpjm: f64, jmjp: f64 },

    #[error(
        "step-size check failed: halving dt changed the result by {discrepancy:e} \
         (tolerance {tolerance:e}); retry with dt <= {suggested_dt:e}"
    )]
    StepSize {
        discrepancy: f64,
        tolerance: f64,
        suggested_dt: f64,
    },

    #[error("no convergence by t = {t_max}: residual {residual:e} above {tolerance:e}")]
    Convergence { t_max: f64, residual: f64, tolerance: f64 },

    #[error("root bracketing failed: {0}")]
    Bracket(String),
}
