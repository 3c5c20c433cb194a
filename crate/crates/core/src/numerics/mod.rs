//! Special-function kernels and small solvers shared by the estimators.

mod ks;
mod least_squares;
mod scalar;
mod simplex;
mod zeta;

pub use ks::ks_statistic;
pub use least_squares::{
    linearized_stderr, linearized_stderr_single, nls_solve, FnResiduals, NlsSolution, Residuals,
};
pub use scalar::golden_section_minimize;
pub use simplex::simplex_minimize;
pub use zeta::{hurwitz_tail, zipf_mass, zipf_mass_dbeta, HEAD_TERMS};

pub(crate) use zeta::{zipf_mass_continued, zipf_mass_dbeta_continued};

use crate::error::{Error, Result};

/// Knobs shared by the iterative solvers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    /// Relative size of the initial simplex edges.
    pub step_scale: f64,
    /// Jittered restarts attempted before giving up.
    pub restarts: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 500,
            relative_tolerance: 1e-10,
            step_scale: 0.1,
            restarts: 3,
        }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.relative_tolerance > 0.0 && self.relative_tolerance < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "relative_tolerance must lie in (0, 1), got {}",
                self.relative_tolerance
            )));
        }
        if !(self.step_scale > 0.0) || !self.step_scale.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "step_scale must be positive, got {}",
                self.step_scale
            )));
        }
        Ok(())
    }
}
