use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParameters(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    /// The conditional distribution of the unobserved cells of a row could not
    /// be formed (the relevant precision block is not positive definite).
    #[error("conditioning failure at row {row}")]
    ConditioningFailure { row: usize },

    #[error("invalid sufficient statistics: {0}")]
    InvalidStats(String),

    #[error("{solver} did not converge after {iterations} iterations (primal {primal:.3e}, dual {dual:.3e})")]
    NoConvergence {
        solver: &'static str,
        iterations: usize,
        primal: f64,
        dual: f64,
    },

    #[error("degenerate variable '{variable}' in condition {condition}: no observed cells")]
    DegenerateVariable { variable: String, condition: usize },

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("degenerate path: {0}")]
    DegeneratePath(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}
