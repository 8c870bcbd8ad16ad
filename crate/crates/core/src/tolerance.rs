//! Numeric tolerances shared by every deduplication and comparison decision.

use serde::{Deserialize, Serialize};

/// Default tolerance for comparing group elements, points and distances.
pub const COMPARE_TOL: f64 = 1e-9;

/// Default tolerance for deciding that a matrix entry is zero during normalization.
pub const NORMALIZE_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub compare: f64,
    pub normalize: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            compare: COMPARE_TOL,
            normalize: NORMALIZE_TOL,
        }
    }
}
