//! Numerical laboratory for Denjoy domains.
//!
//! Builds the reflection group and fundamental domain attached to a closed
//! subset of the extended real line and measures the quantities that govern
//! its geometry: Carleson homogeneity, logarithmic capacity, orbit length
//! sums, exponent of convergence, Carleson norms of orbit pushforwards, and
//! Bloch/BMOA functionals of universal coverings.

// Validation writes `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arc;
pub mod capacity;
pub mod carleson;
pub mod cli;
pub mod config;
pub mod covering;
pub mod denjoy;
pub mod error;
pub mod fuchsian;
pub mod hyperbolic;
pub mod quadrature;
pub mod tolerance;

pub use error::{LabError, Result};
