//! Synthetic populations and the biased ways an observer gets to see them.
//!
//! A population is the deterministic ladder of expected volumes `c / i^beta`.
//! Samples are drawn from it by rank, then optionally perturbed:
//!
//! * `nonuniform`: `n` distinct ranks drawn without replacement with weights
//!   `p (1 - p)^(i - 1)`;
//! * `noisy`: nonuniform, then `X_i = V_i * eps_i` with `eps_i ~ Normal(mu, sigma^2)`
//!   truncated to positive values;
//! * `sketchy`: nonuniform, then `X_i = V_i + gamma_i * c` with
//!   `gamma_i ~ Uniform[0, gamma]`, the overestimate of a count-min sketch;
//! * `uniform`: `n` distinct ranks with equal weights (the baseline that fails
//!   to reproduce the tail drop seen in real data).
//!
//! After perturbation a sample is re-sorted by observed volume; downstream
//! fits use the within-sample rank.

mod binning;

pub use binning::{bin_volumes, infer_binning, BinnedSample, BinningScheme, SEARCHVOLUME_RATIO};

use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PopulationSpec;

/// Largest population [`build_population`] will materialize.
pub const DEFAULT_POPULATION_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Uniform,
    Nonuniform,
    Noisy,
    Sketchy,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Uniform,
        Scheme::Nonuniform,
        Scheme::Noisy,
        Scheme::Sketchy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Uniform => "uniform",
            Scheme::Nonuniform => "nonuniform",
            Scheme::Noisy => "noisy",
            Scheme::Sketchy => "sketchy",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParameter(format!("unknown sampling scheme {s:?}")))
    }
}

/// Bias-model parameters, with the reference simulation values as defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasParams {
    /// Geometric decay of the inclusion weight with rank.
    pub geometric_p: f64,
    pub noise_mean: f64,
    pub noise_sd: f64,
    /// Upper end of the sketch overestimate, as a fraction of the intercept.
    pub sketch_fraction: f64,
}

impl Default for BiasParams {
    fn default() -> Self {
        BiasParams {
            geometric_p: 0.001,
            noise_mean: 1.0,
            noise_sd: (0.01f64 / 9.0).sqrt(),
            sketch_fraction: 0.001,
        }
    }
}

impl BiasParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.geometric_p > 0.0 && self.geometric_p < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "geometric p must lie in (0, 1), got {}",
                self.geometric_p
            )));
        }
        if !(self.noise_sd >= 0.0) || !self.noise_mean.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "noise needs finite mean and sd >= 0, got ({}, {})",
                self.noise_mean, self.noise_sd
            )));
        }
        if !(self.sketch_fraction >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "sketch fraction must be >= 0, got {}",
                self.sketch_fraction
            )));
        }
        Ok(())
    }
}

/// One complete, seeded recipe for drawing a sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SamplingConfig {
    pub scheme: Scheme,
    pub sample_size: usize,
    pub bias: BiasParams,
    pub seed: u64,
}

/// Observed volumes, descending, with the population ranks they came from
/// when known.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousSample {
    volumes: Vec<f64>,
    true_ranks: Option<Vec<u64>>,
}

impl ContinuousSample {
    /// Sorts `volumes` descending. All must be positive and finite.
    pub fn new(mut volumes: Vec<f64>) -> Result<Self> {
        check_volumes(&volumes)?;
        volumes.sort_by(|a, b| b.total_cmp(a));
        Ok(ContinuousSample {
            volumes,
            true_ranks: None,
        })
    }

    /// Pairs each volume with its population rank and sorts by volume.
    pub fn with_ranks(volumes: Vec<f64>, ranks: Vec<u64>) -> Result<Self> {
        check_volumes(&volumes)?;
        if volumes.len() != ranks.len() {
            return Err(Error::InvalidParameter("volumes and ranks differ in length".into()));
        }
        let mut pairs: Vec<(f64, u64)> = volumes.into_iter().zip(ranks).collect();
        pairs.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        let (volumes, ranks) = pairs.into_iter().unzip();
        Ok(ContinuousSample {
            volumes,
            true_ranks: Some(ranks),
        })
    }

    pub fn volumes(&self) -> &[f64] {
        &self.volumes
    }

    pub fn true_ranks(&self) -> Option<&[u64]> {
        self.true_ranks.as_deref()
    }

    pub fn len(&self) -> usize {
        self.volumes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.volumes.is_empty()
    }

    /// Whether the sample holds the population's top query; `None` without provenance.
    pub fn includes_rank_one(&self) -> Option<bool> {
        self.true_ranks.as_ref().map(|r| r.contains(&1))
    }

    pub fn total_volume(&self) -> f64 {
        self.volumes.iter().sum()
    }

    /// Applies `f` to every volume and re-sorts, keeping provenance aligned.
    fn remap<F: FnMut(f64) -> f64>(&self, mut f: F) -> Result<Self> {
        let volumes: Vec<f64> = self.volumes.iter().map(|&v| f(v)).collect();
        match &self.true_ranks {
            Some(r) => ContinuousSample::with_ranks(volumes, r.clone()),
            None => ContinuousSample::new(volumes),
        }
    }
}

fn check_volumes(volumes: &[f64]) -> Result<()> {
    match volumes.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        Some(v) => Err(Error::InvalidParameter(format!(
            "volumes must be positive and finite, got {v}"
        ))),
        None => Ok(()),
    }
}

/// Expected volumes `c / i^beta` for `i = 1..=N`, using the default cap.
pub fn build_population(spec: &PopulationSpec) -> Result<Vec<f64>> {
    build_population_capped(spec, DEFAULT_POPULATION_CAP)
}

pub fn build_population_capped(spec: &PopulationSpec, cap: u64) -> Result<Vec<f64>> {
    spec.params.validate()?;
    if spec.n_queries > cap {
        return Err(Error::CapExceeded {
            requested: spec.n_queries,
            cap,
        });
    }
    let (c, beta) = (spec.params.c, spec.params.beta);
    Ok((1..=spec.n_queries)
        .map(|i| c / (i as f64).powf(beta))
        .collect())
}

fn check_sample_size(n: usize, population: usize) -> Result<()> {
    if n == 0 || n > population {
        return Err(Error::InvalidParameter(format!(
            "sample size {n} must lie in 1..={population}"
        )));
    }
    Ok(())
}

fn sample_from_ranks(population: &[f64], mut ranks: Vec<u64>) -> Result<ContinuousSample> {
    ranks.sort_unstable();
    let volumes = ranks.iter().map(|&r| population[(r - 1) as usize]).collect();
    ContinuousSample::with_ranks(volumes, ranks)
}

/// `n` distinct ranks, weighted `p (1 - p)^(i - 1)`, drawn without replacement.
///
/// Uses exponential-race keys `E_i / w_i` and keeps the `n` smallest; keys are
/// compared in log space since `(1 - p)^(i - 1)` underflows deep in the tail.
pub fn sample_nonuniform<R: Rng + ?Sized>(
    population: &[f64],
    n: usize,
    p: f64,
    rng: &mut R,
) -> Result<ContinuousSample> {
    check_sample_size(n, population.len())?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidParameter(format!("geometric p must lie in (0, 1), got {p}")));
    }
    let log_decay = (-p).ln_1p();
    let decay = 1.0 - p;
    // Max-heap of the n smallest keys seen so far.
    let mut heap: BinaryHeap<RaceKey> = BinaryHeap::with_capacity(n + 1);
    // Once the heap is full, rank i can only enter if its exponential draw is
    // below exp(worst + i * log_decay); the draw is at least u, so larger u
    // skip the logarithms. The bound is rescaled incrementally, hence the slack.
    let mut bound = f64::INFINITY;
    for i in 0..population.len() {
        let u = rng.random::<f64>();
        bound *= decay;
        // Nonzero u are at least 2^-53; flushing avoids slow subnormal arithmetic.
        if bound < 1e-300 {
            bound = 0.0;
        }
        if u > bound * (1.0 + 1e-9) {
            continue;
        }
        // 1 - u lies in (0, 1], so the exponential draw is finite.
        let e = -(1.0 - u).ln();
        let key = RaceKey(e.ln() - i as f64 * log_decay, i as u64 + 1);
        if heap.len() < n {
            heap.push(key);
        } else if key.0 < heap.peek().map_or(f64::INFINITY, |k| k.0) {
            heap.pop();
            heap.push(key);
        } else {
            continue;
        }
        if heap.len() == n {
            let worst = heap.peek().map_or(f64::INFINITY, |k| k.0);
            bound = (worst + i as f64 * log_decay).exp();
        }
    }
    sample_from_ranks(population, heap.into_iter().map(|k| k.1).collect())
}

/// Exponential-race key ordered by value.
#[derive(Debug, Clone, Copy)]
struct RaceKey(f64, u64);

impl PartialEq for RaceKey {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == std::cmp::Ordering::Equal
    }
}

impl Eq for RaceKey {}

impl PartialOrd for RaceKey {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for RaceKey {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// `n` distinct ranks with equal weights.
pub fn sample_uniform<R: Rng + ?Sized>(
    population: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<ContinuousSample> {
    check_sample_size(n, population.len())?;
    let ranks = rand::seq::index::sample(rng, population.len(), n)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect();
    sample_from_ranks(population, ranks)
}

/// Multiplicative noise `eps ~ Normal(mu, sigma^2)` truncated to `eps > 0`.
pub fn apply_noise<R: Rng + ?Sized>(
    sample: &ContinuousSample,
    mu: f64,
    sigma: f64,
    rng: &mut R,
) -> Result<ContinuousSample> {
    if !(sigma >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "noise needs finite mean and sd >= 0, got ({mu}, {sigma})"
        )));
    }
    if sigma == 0.0 {
        if !(mu > 0.0) {
            return Err(Error::InvalidParameter("noiseless multiplier must be positive".into()));
        }
        return sample.remap(|v| v * mu);
    }
    let normal = Normal::new(mu, sigma)
        .map_err(|e| Error::InvalidParameter(format!("noise distribution: {e}")))?;
    sample.remap(|v| v * truncated_draw(&normal, rng))
}

fn truncated_draw<R: Rng + ?Sized>(normal: &Normal<f64>, rng: &mut R) -> f64 {
    loop {
        let e = normal.sample(rng);
        if e > 0.0 {
            return e;
        }
    }
}

/// Additive sketch overestimate `gamma_i * c_top`, `gamma_i ~ Uniform[0, gamma]`.
pub fn apply_sketch<R: Rng + ?Sized>(
    sample: &ContinuousSample,
    gamma: f64,
    c_top: f64,
    rng: &mut R,
) -> Result<ContinuousSample> {
    if !(gamma >= 0.0) || !(c_top > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sketch needs gamma >= 0 and c > 0, got ({gamma}, {c_top})"
        )));
    }
    if gamma == 0.0 {
        return Ok(sample.clone());
    }
    sample.remap(|v| v + rng.random::<f64>() * gamma * c_top)
}

/// Draws a sample under `scheme` with the given bias parameters.
pub fn draw_sample<R: Rng + ?Sized>(
    population: &[f64],
    scheme: Scheme,
    n: usize,
    bias: &BiasParams,
    rng: &mut R,
) -> Result<ContinuousSample> {
    bias.validate()?;
    let c_top = *population
        .first()
        .ok_or_else(|| Error::InvalidParameter("empty population".into()))?;
    match scheme {
        Scheme::Uniform => sample_uniform(population, n, rng),
        Scheme::Nonuniform => sample_nonuniform(population, n, bias.geometric_p, rng),
        Scheme::Noisy => {
            let s = sample_nonuniform(population, n, bias.geometric_p, rng)?;
            apply_noise(&s, bias.noise_mean, bias.noise_sd, rng)
        }
        Scheme::Sketchy => {
            let s = sample_nonuniform(population, n, bias.geometric_p, rng)?;
            apply_sketch(&s, bias.sketch_fraction, c_top, rng)
        }
    }
}

/// [`draw_sample`] with a generator seeded from `config.seed`.
pub fn draw_seeded_sample(population: &[f64], config: &SamplingConfig) -> Result<ContinuousSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    draw_sample(population, config.scheme, config.sample_size, &config.bias, &mut rng)
}
