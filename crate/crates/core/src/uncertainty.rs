//! Propagation of the parameter errors `(delta_c, delta_beta)` to the threshold
//! estimates `N_v` and `V_v`.
//!
//! With `N = (c/v)^(1/beta)` and `V = c * S(beta, N)`:
//!
//! ```text
//! dN/dc    = N / (beta c)
//! dN/dbeta = -(N / beta^2) ln(c/v)
//! dV/dc    = V / c + N zeta(beta + 1, N + 1)
//! dV/dbeta = c [ dS/dbeta(beta, N) - N ln(c/v) zeta(beta + 1, N + 1) / beta ]
//! ```
//!
//! `dS/dbeta` is the fused derivative [`zipf_mass_dbeta`](crate::numerics::zipf_mass_dbeta).
//! Errors combine as `|dX/dc| dc + |dX/dbeta| dbeta` by default, or in
//! quadrature with [`Propagation::Quadrature`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    estimate_query_count, estimate_total_volume, PopulationEstimate, ZipfParams,
};
use crate::numerics::{hurwitz_tail, zipf_mass_dbeta_continued};

/// Standard errors of the fitted intercept and coefficient.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamErrors {
    pub delta_c: f64,
    pub delta_beta: f64,
}

impl ParamErrors {
    pub fn new(delta_c: f64, delta_beta: f64) -> Result<Self> {
        if !(delta_c >= 0.0) || !(delta_beta >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "parameter errors must be non-negative, got ({delta_c}, {delta_beta})"
            )));
        }
        Ok(ParamErrors {
            delta_c,
            delta_beta,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Propagation {
    /// Sum of absolute contributions.
    #[default]
    Absolute,
    /// Root sum of squares, for independent errors.
    Quadrature,
}

impl Propagation {
    fn combine(self, a: f64, b: f64) -> f64 {
        match self {
            Propagation::Absolute => a.abs() + b.abs(),
            Propagation::Quadrature => a.hypot(b),
        }
    }
}

fn check_threshold(v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("threshold must be positive, got {v}")))
    }
}

/// `(dN/dc, dN/dbeta)` at threshold `v`.
pub fn count_partials(params: ZipfParams, v: f64) -> Result<(f64, f64)> {
    params.validate()?;
    check_threshold(v)?;
    let n = estimate_query_count(params, v);
    let b = params.beta;
    Ok((n / (b * params.c), -(n / (b * b)) * (params.c / v).ln()))
}

pub fn count_error(params: ZipfParams, errs: ParamErrors, v: f64) -> Result<f64> {
    count_error_with(params, errs, v, Propagation::Absolute)
}

pub fn count_error_with(
    params: ZipfParams,
    errs: ParamErrors,
    v: f64,
    how: Propagation,
) -> Result<f64> {
    let (dc, db) = count_partials(params, v)?;
    Ok(how.combine(dc * errs.delta_c, db * errs.delta_beta))
}

/// `(dV/dc, dV/dbeta)` at threshold `v`.
pub fn volume_partials(params: ZipfParams, v: f64) -> Result<(f64, f64)> {
    params.validate()?;
    check_threshold(v)?;
    let c = params.c;
    let b = params.beta;
    let n = estimate_query_count(params, v);
    let volume = estimate_total_volume(params, v)?;
    let tail = hurwitz_tail(b + 1.0, n + 1.0)?;
    let d_mass = zipf_mass_dbeta_continued(b, n)?;
    let dv_dc = volume / c + n * tail;
    let dv_db = c * (d_mass - n * (c / v).ln() * tail / b);
    Ok((dv_dc, dv_db))
}

pub fn volume_error(params: ZipfParams, errs: ParamErrors, v: f64) -> Result<f64> {
    volume_error_with(params, errs, v, Propagation::Absolute)
}

pub fn volume_error_with(
    params: ZipfParams,
    errs: ParamErrors,
    v: f64,
    how: Propagation,
) -> Result<f64> {
    let (dc, db) = volume_partials(params, v)?;
    Ok(how.combine(dc * errs.delta_c, db * errs.delta_beta))
}

/// `N_v`, `V_v` and their errors at one threshold.
pub fn estimate_population(
    params: ZipfParams,
    errs: ParamErrors,
    v: f64,
    how: Propagation,
) -> Result<PopulationEstimate> {
    params.validate()?;
    check_threshold(v)?;
    Ok(PopulationEstimate {
        threshold_v: v,
        n_hat: estimate_query_count(params, v),
        delta_n: count_error_with(params, errs, v, how)?,
        v_hat: estimate_total_volume(params, v)?,
        delta_v: volume_error_with(params, errs, v, how)?,
        above_intercept: v > params.c,
    })
}
