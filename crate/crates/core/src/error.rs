use thiserror::Error;

/// Errors produced by circuit assembly, solving, and mapping.
#[derive(Debug, Error)]
pub enum CoreError {
    /// A configuration failed validation (zero dimensions, negative resistance, ...).
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// An input value violates a precondition (out-of-bounds conductance, bad alpha, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The system matrix was numerically singular. This indicates an internal
    /// fault for any in-bounds conductance grid.
    #[error("singular system while {context}: pivot {pivot:.3e} at row {row}")]
    Singular {
        context: &'static str,
        row: usize,
        pivot: f64,
    },

    /// A nonlinear solve ran out of iterations.
    #[error(
        "no convergence after {iterations} iterations: residual {residual:.3e} \
         (relative {relative:.3e}) at node {node}"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        relative: f64,
        node: String,
    },
}

pub type Result<T> = std::result::Result<T, CoreError>;
