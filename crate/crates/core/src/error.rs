use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("matrix is not Hermitian (asymmetry {asymmetry:.3e} exceeds {tolerance:.1e})")]
    NotHermitian { asymmetry: f64, tolerance: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("configured cap exceeded: {0}")]
    CapExceeded(String),

    #[error("integer overflow while computing {0}")]
    Overflow(String),

    #[error("not a quantum channel: {0}")]
    NotAChannel(String),

    #[error(
        "SDP did not converge after {iterations} iterations \
         (primal {primal:.9}, dual {dual:.9}, gap {gap:.3e})"
    )]
    NonConvergence {
        iterations: usize,
        primal: f64,
        dual: f64,
        gap: f64,
    },

    #[error("linear algebra failure: {0}")]
    LinearAlgebra(String),

    #[error("serialization: {0}")]
    Serialization(#[from] serde_json::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
