use alloc::string::String;

use crate::linalg::FactorError;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid instance: {0}")]
    Instance(String),
    #[error("subsystem {subsystem}: {message}")]
    Evaluation { subsystem: usize, message: String },
    #[error("subsystem {subsystem}: slack or multiplier not strictly positive")]
    InteriorViolation { subsystem: usize },
    #[error("subsystem {subsystem}: local KKT factorization failed: {source}")]
    Factorization {
        subsystem: usize,
        #[source]
        source: FactorError,
    },
    #[error("centralized KKT factorization failed: {0}")]
    CentralFactorization(#[source] FactorError),
    #[error("CG breakdown, q'Sq = {curvature:e} at iteration {iteration}")]
    Curvature { iteration: usize, curvature: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid options: {0}")]
    Options(&'static str),
    #[error("internal invariant violated: {0}")]
    Invariant(String),
}
