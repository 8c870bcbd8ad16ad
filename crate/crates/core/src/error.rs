use num_complex::Complex64;
use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("map has a pole at {0}")]
    Pole(Complex64),

    #[error("numerator and denominator vanish together at {0}; map is not normalized")]
    Unnormalized(Complex64),

    #[error("antiholomorphic map has no trace")]
    Antiholomorphic,

    #[error("geodesic endpoints coincide")]
    DegenerateGeodesic,

    #[error("point {0} is fixed by the map")]
    FixedPoint(Complex64),

    #[error("ideal point {0} is not allowed here")]
    IdealPoint(Complex64),

    #[error("empty set")]
    EmptySet,

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("{what} did not converge (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("measure mass diverges near z={z}, r={r}")]
    Divergent { z: Complex64, r: f64 },

    #[error("point {z} could not be reduced into the fundamental domain (reached d(0,.)={distance})")]
    Irreducible { z: Complex64, distance: f64 },

    #[error("uncovered quadrature mass fraction {fraction:.3} exceeds 10%; enlarge the group budget")]
    InsufficientBudget { fraction: f64 },

    #[error("derivative validation failed at {z}: relative mismatch {mismatch:e}")]
    DerivativeValidation { z: Complex64, mismatch: f64 },

    #[error("invalid configuration field `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidInput(msg.into())
}
