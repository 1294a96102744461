//! Quantum principal-component analysis of forward-rate covariance matrices
//! on a gate-level statevector simulator, and the multi-factor HJM Monte
//! Carlo engine that consumes the extracted volatility factors.

pub mod error;
pub mod fixtures;
pub mod hjm;
pub mod linalg;
pub mod qpca;
pub mod qsim;
pub mod cli;

pub use error::{Error, Result};
