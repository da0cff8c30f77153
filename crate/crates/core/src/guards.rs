use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Feasibility limits on dyadic levels. All costs grow geometrically in the
/// level, so every heavy operation checks its level against one of these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Guards {
    /// Exact mean of the quadratic variation (diagonal sum, O(2^n)).
    pub mean_level: u32,
    /// Exact variance (full double sum, O(4^n)).
    pub variance_level: u32,
    /// Exact sampler (Cholesky, O(8^n)).
    pub simulation_level: u32,
    /// Largest `m + n` in the double-sequence table.
    pub double_sequence_sum: u32,
    /// Largest level of a materialized cross-increment matrix.
    pub matrix_level: u32,
}

impl Default for Guards {
    fn default() -> Self {
        Self {
            mean_level: 22,
            variance_level: 13,
            simulation_level: 11,
            double_sequence_sum: 20,
            matrix_level: 12,
        }
    }
}

impl Guards {
    pub(crate) fn check(what: &'static str, level: u32, guard: u32) -> Result<()> {
        if level > guard {
            Err(Error::GuardExceeded { what, level, guard })
        } else {
            Ok(())
        }
    }
}
