use thiserror::Error;

use crate::forms::Bidegree;

#[derive(Debug, Error)]
pub enum Error {
    #[error("bidegree {bidegree} is outside the complex of dimension {n}")]
    Degree { bidegree: Bidegree, n: usize },

    #[error("bidegree mismatch: expected {expected}, found {found}")]
    BidegreeMismatch { expected: Bidegree, found: Bidegree },

    #[error("forms live on different complexes (dimension {left} vs {right})")]
    SpaceMismatch { left: usize, right: usize },

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error("invalid model: {0}")]
    Validation(String),

    #[error("metric is not positive definite (margin {margin:.3e})")]
    NotPositive { margin: f64 },

    #[error("metric is not Hermitian-symplectic: feasibility residual {residual:.3e} exceeds {tolerance:.1e}")]
    NotHermitianSymplectic { residual: f64, tolerance: f64 },

    #[error("{what}: distance to the image is {distance:.3e} (tolerance {tolerance:.1e})")]
    NotInImage { what: &'static str, distance: f64, tolerance: f64 },

    #[error("precondition failed: {what} (residual {residual:.3e})")]
    Precondition { what: String, residual: f64 },

    #[error("numerical contract violated: {0}")]
    Contract(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors that indicate a broken mathematical invariant rather than bad input.
    pub fn is_contract_violation(&self) -> bool {
        matches!(self, Error::Contract(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
