//! Error type shared across the crate.
//!
//! Validation messages name the numbered assumption or theorem condition
//! they enforce (see the README's "Validated assumptions" table), so a
//! rejected configuration always states which requirement failed and where.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch { context: String, expected: usize, got: usize },

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("edge list parse error at line {line}: {msg}")]
    EdgeListParse { line: usize, msg: String },

    #[error("Assumption 2 (strong connectivity) violated: {0}")]
    NotStronglyConnected(String),

    #[error("invalid objective: {0}")]
    InvalidObjective(String),

    #[error(
        "Theorem 1 sampling-time condition fails at node {node}: \
         1/T - sum of in-weights = {margin} must be positive"
    )]
    SamplingTimeTooLarge { node: usize, margin: f64 },

    #[error(
        "Theorem 1 coupling condition fails at node {node}: \
         epsilon = {epsilon} must be below 1/T - sum of in-weights = {bound}"
    )]
    EpsilonTooLarge { node: usize, epsilon: f64, bound: f64 },

    #[error("Assumption 3 (step-size admissibility) violated: {0}")]
    InvalidSchedule(String),

    #[error(
        "spectral guard: estimated spectral radius of M - M_inf is {rho}, \
         which is not below {limit}; the mixing iteration would not contract"
    )]
    SpectralGuard { rho: f64, limit: f64 },

    #[error("invalid surplus weights: {0}")]
    InvalidSurplusWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("divergence at iteration {k}: {what}")]
    Divergence { k: u64, what: String },

    #[error("engine disagreement at iteration {k}: max deviation {deviation} exceeds {limit}")]
    VerificationMismatch { k: u64, deviation: f64, limit: f64 },

    #[error(
        "centralized optimum solver stopped at gradient norm {grad_norm} \
         after {iters} iterations without reaching tolerance {tol}"
    )]
    OptimumNotReached { tol: f64, iters: u64, grad_norm: f64 },

    #[error("projection onto the optimal set is unsupported: {0}")]
    UnsupportedProjection(String),

    #[error("singular matrix in {0}")]
    Singular(&'static str),
}
