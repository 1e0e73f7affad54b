//! Central numeric tolerances.
//!
//! Every structural check in the crate (symmetry, Hamiltonian residuals,
//! singularity cutoffs) draws its thresholds from one record so that runs
//! are reproducible across machines and the CLI can override them in one
//! place.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericPolicy {
    /// Relative tolerance for residual-style checks (Lyapunov residuals,
    /// Hamiltonian structure, symmetry of solution matrices).
    pub rtol: f64,
    /// Relative cutoff for eigenvalue/singular-value classification
    /// (rank decisions, positive-semidefiniteness, nonsingularity).
    pub eigen_tol: f64,
}

impl Default for NumericPolicy {
    fn default() -> Self {
        NumericPolicy {
            rtol: 1e-10,
            eigen_tol: 1e-12,
        }
    }
}
