//! The rank-volume law `V_i = c / i^beta` and the closed-form population
//! estimators built on it.
//!
//! For a population of `N` queries the expected volume of the query at rank
//! `i` is `c / i^beta`, so the total volume is `c * S(beta, N)` with
//! `S(beta, x) = sum_{i<=x} i^-beta` (see [`zipf_mass`]). Inverting the law at a
//! threshold `v` gives the number of queries searched at least `v` times,
//! `N_v = (c / v)^(1/beta)`, and their total volume `V_v = c * S(beta, N_v)`.
//! `N_v` is kept real-valued throughout; rounding is left to presentation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{zipf_mass, zipf_mass_continued};

/// Intercept `c` (volume of the top query) and coefficient `beta` (decay with rank).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZipfParams {
    pub c: f64,
    pub beta: f64,
}

impl ZipfParams {
    pub fn new(c: f64, beta: f64) -> Result<Self> {
        let params = ZipfParams { c, beta };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "intercept c must be positive, got {}",
                self.c
            )));
        }
        if !(self.beta > 0.0) || !self.beta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "coefficient beta must be positive, got {}",
                self.beta
            )));
        }
        Ok(())
    }
}

/// A full population: the law, its size `N`, and its smallest volume `V_N`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationSpec {
    pub params: ZipfParams,
    pub n_queries: u64,
    pub min_volume: f64,
}

impl PopulationSpec {
    /// Population with `V_N = c / N^beta`.
    pub fn new(params: ZipfParams, n_queries: u64) -> Result<Self> {
        params.validate()?;
        if n_queries == 0 {
            return Err(Error::InvalidParameter("population needs at least one query".into()));
        }
        Ok(PopulationSpec {
            params,
            n_queries,
            min_volume: expected_volume(params, n_queries),
        })
    }

    pub fn with_min_volume(mut self, min_volume: f64) -> Result<Self> {
        if !(min_volume > 0.0) || min_volume > self.params.c {
            return Err(Error::InvalidParameter(format!(
                "min volume must lie in (0, c], got {min_volume}"
            )));
        }
        self.min_volume = min_volume;
        Ok(self)
    }

    /// Normalizer `A = 1 / S(beta, N)` of the rank probabilities.
    pub fn normalizer(&self) -> Result<f64> {
        Ok(1.0 / zipf_mass(self.params.beta, self.n_queries as f64)?)
    }
}

/// Estimates above one threshold, with their propagated errors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PopulationEstimate {
    pub threshold_v: f64,
    pub n_hat: f64,
    pub delta_n: f64,
    pub v_hat: f64,
    pub delta_v: f64,
    /// Set when the threshold exceeds the intercept, so that fewer than one
    /// query is expected above it.
    pub above_intercept: bool,
}

/// Probability `A / rank^beta` that a search hits the query at `rank`.
pub fn zipf_pmf(beta: f64, n_queries: u64, rank: u64) -> Result<f64> {
    if rank == 0 || rank > n_queries {
        return Err(Error::Domain(format!(
            "rank {rank} outside 1..={n_queries}"
        )));
    }
    Ok((rank as f64).powf(-beta) / zipf_mass(beta, n_queries as f64)?)
}

/// `c / rank^beta`
pub fn expected_volume(params: ZipfParams, rank: u64) -> f64 {
    params.c / (rank as f64).powf(params.beta)
}

/// Total volume `c * S(beta, N)` of a population.
pub fn total_volume(spec: &PopulationSpec) -> Result<f64> {
    Ok(spec.params.c * zipf_mass(spec.params.beta, spec.n_queries as f64)?)
}

/// Number of queries searched at least `v` times, `(c / v)^(1/beta)`.
///
/// A threshold above `c` yields a value below one; see
/// [`PopulationEstimate::above_intercept`].
pub fn estimate_query_count(params: ZipfParams, v: f64) -> f64 {
    (params.c / v).powf(1.0 / params.beta)
}

/// Total volume of the queries searched at least `v` times, `c * S(beta, N_v)`.
pub fn estimate_total_volume(params: ZipfParams, v: f64) -> Result<f64> {
    params.validate()?;
    if !(v > 0.0) {
        return Err(Error::Domain(format!("threshold must be positive, got {v}")));
    }
    let n_hat = estimate_query_count(params, v);
    Ok(params.c * zipf_mass_continued(params.beta, n_hat)?)
}

/// Checks that inverting the law at `V_N` gives back `N`.
pub fn self_inversion_check(spec: &PopulationSpec) -> bool {
    let n = spec.n_queries as f64;
    ((estimate_query_count(spec.params, spec.min_volume) - n) / n).abs() <= 1e-9
}
