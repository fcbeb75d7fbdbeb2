use thiserror::Error;

/// Crate-wide error type. The CLI maps variants onto process exit codes, so
/// keep the classification stable: configuration problems, solver
/// non-convergence, and violated mathematical invariants are distinct.
#[derive(Debug, Error)]
pub enum BdfError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("linear algebra failure: {0}")]
    Linalg(String),

    #[error("{what} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        what: String,
        residual: f64,
        iterations: usize,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BdfError>;
