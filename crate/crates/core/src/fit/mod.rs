//! Estimating `(c, beta)` from continuous and binned samples.
//!
//! Continuous samples go through a power-law tail fit with a KS-selected cutoff,
//! either alone (`CSN_MAX`, with `c` read off the top observation) or as the
//! cutoff for a truncated least-squares regression of the rank-volume curve
//! (`NLS`). Binned samples use the binned analogue of the tail fit to choose the
//! first bin, then minimize Pearson's chi-square over both parameters (`CHI2`)
//! or over `c` alone with `beta` frozen at the tail fit (`CSN_CONSTRAINED_CHI2`).

mod binned;
mod continuous;

pub use binned::{
    binned_csn_fit, binned_ks_distance, chisq_fit, chisq_objective, constrained_chisq_fit,
    expected_bin_counts, fit_binned, fit_binned_with, sketchy_filter, BinnedCsnFit,
    BinnedFitInputs,
};
pub use continuous::{
    beta_from_alpha, csn_fit, fit_continuous, fit_continuous_with, max_estimator_c,
    nls_zipf_fit, ols_loglog_init, CsnFit, MIN_TAIL,
};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ZipfParams;
use crate::uncertainty::ParamErrors;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitMethod {
    Nls,
    CsnMax,
    Chi2,
    CsnConstrainedChi2,
}

impl FitMethod {
    pub const ALL: [FitMethod; 4] = [
        FitMethod::Nls,
        FitMethod::CsnMax,
        FitMethod::Chi2,
        FitMethod::CsnConstrainedChi2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FitMethod::Nls => "NLS",
            FitMethod::CsnMax => "CSN_MAX",
            FitMethod::Chi2 => "CHI2",
            FitMethod::CsnConstrainedChi2 => "CSN_CONSTRAINED_CHI2",
        }
    }

    /// Whether the method consumes binned samples.
    pub fn is_binned(self) -> bool {
        matches!(self, FitMethod::Chi2 | FitMethod::CsnConstrainedChi2)
    }
}

impl fmt::Display for FitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FitMethod {
    type Err = Error;

    /// Accepts the canonical names and the short CLI spellings
    /// (`nls`, `csn-max`, `chi2`, `constrained`).
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('-', "_");
        match key.as_str() {
            "NLS" => Ok(FitMethod::Nls),
            "CSN_MAX" => Ok(FitMethod::CsnMax),
            "CHI2" => Ok(FitMethod::Chi2),
            "CSN_CONSTRAINED_CHI2" | "CONSTRAINED" => Ok(FitMethod::CsnConstrainedChi2),
            _ => Err(Error::InvalidParameter(format!("unknown fit method {s:?}"))),
        }
    }
}

/// A fitted law with its standard errors and the region it was fitted on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ZipfParams,
    pub errors: ParamErrors,
    /// Observations at or above the cutoff.
    pub cutoff_rank: usize,
    pub cutoff_volume: f64,
    pub method: FitMethod,
    pub ks_distance: f64,
    /// Power-law exponent of the volume distribution, for tail-fit methods.
    pub alpha: Option<f64>,
    /// Set when the solver failed and the starting point was reported instead.
    pub fallback: bool,
}
