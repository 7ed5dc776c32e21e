use thiserror::Error;

/// Errors produced by the numerical engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("dense dimension {requested} exceeds the configured guardrail max_dim = {max_dim}")]
    DimensionOverflow { requested: usize, max_dim: usize },

    #[error("dense eigensolver budget exceeded: dimension {dim} > budget {budget}")]
    EigBudgetExceeded { dim: usize, budget: usize },

    #[error("matrix contains non-finite entries ({context})")]
    NonFinite { context: &'static str },

    #[error("ensemble member {index} is not unitary: ||U^dag U - I|| = {deviation:.3e}")]
    NotUnitary { index: usize, deviation: f64 },

    #[error("ensemble probabilities invalid: {reason}")]
    InvalidProbabilities { reason: String },

    #[error(
        "power iteration did not converge after {iterations} iterations \
         (last estimate {last_estimate:.6e}, relative change {last_change:.3e})"
    )]
    NoConvergence {
        iterations: usize,
        last_estimate: f64,
        last_change: f64,
    },

    #[error(
        "residual fails the invariant-subspace orthogonality check: \
         ||P R|| = {norm_pr:.3e}, ||R P|| = {norm_rp:.3e} (tolerance {tol:.1e}); \
         the moment operator was likely built from non-unitary members"
    )]
    OrthogonalityViolation { norm_pr: f64, norm_rp: f64, tol: f64 },

    #[error("gate placement graph does not connect all {n_sites} sites")]
    DisconnectedGraph { n_sites: usize },

    #[error("depth bound is unbounded: {input} gap is zero")]
    UnboundedDepth { input: &'static str },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Linalg(#[from] ndarray_linalg::error::LinalgError),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
