use thiserror::Error;

/// Errors raised across the simulator, the qPCA driver and the HJM engine.
#[derive(Debug, Error)]
pub enum Error {
    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    /// The eigenvalue register was projected onto an outcome with (almost) zero weight.
    #[error("degenerate projection: probability {probability:.3e} onto '{bitstring}' (choose a different target bitstring)")]
    DegenerateProjection { bitstring: String, probability: f64 },

    #[error("eigenvalue ambiguity: cross-fidelity {cross_fidelity:.4} between independent starts; increase n_bits")]
    Ambiguity { cross_fidelity: f64 },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }

    /// Process exit code: 2 for bad input, 3 for numerical or convergence failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Io(_) | Error::Parse(_) => 2,
            Error::Numerical(_) | Error::DegenerateProjection { .. } | Error::Ambiguity { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
