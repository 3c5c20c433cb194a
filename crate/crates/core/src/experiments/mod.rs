//! Monte Carlo harness: draw many biased samples from one population, fit each,
//! and summarize the estimates of `c`, `beta`, `N` and the total volume.
//!
//! Replicate `r` of every cell draws from `ChaCha8` seeded with the base seed on
//! stream `r`. Cells that differ only in scheme or method therefore see the
//! same underlying selection of ranks, which makes between-method comparisons
//! less noisy. Replicates run in parallel and are reduced in replicate order,
//! so results do not depend on the thread count.

mod config;
mod export;

pub use config::{parse_config, ConfigFile};
pub use export::{read_rank_distribution, write_rank_distribution, write_scatter_csv};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::{fit_binned, fit_continuous, FitMethod};
use crate::model::{
    estimate_query_count, estimate_total_volume, total_volume, PopulationSpec, ZipfParams,
};
use crate::sampling::{
    bin_volumes, build_population, draw_sample, BiasParams, BinningScheme, ContinuousSample,
    Scheme, SEARCHVOLUME_RATIO,
};

pub const DEFAULT_SAMPLE_SIZES: [usize; 7] = [500, 1000, 2000, 4000, 6000, 8000, 10_000];
pub const DEFAULT_REPLICATES: usize = 100;
pub const DEFAULT_SEED: u64 = 42;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub population: PopulationSpec,
    pub schemes: Vec<Scheme>,
    pub sample_sizes: Vec<usize>,
    pub methods: Vec<FitMethod>,
    pub replicates: usize,
    pub base_seed: u64,
    /// Fit binned samples (`CHI2`, `CSN_CONSTRAINED_CHI2`) instead of raw volumes.
    pub binned: bool,
    /// Bin ladder for binned runs; defaults to [`ExperimentConfig::default_binning`].
    pub binning: Option<BinningScheme>,
    pub bias: BiasParams,
    /// Sketch fraction handed to the binned fits.
    pub gamma_hint: Option<f64>,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl ExperimentConfig {
    /// Reference setup: `c = 1e5`, `beta = 0.7745`, `N = 1e6`, continuous NLS
    /// and CSN_MAX under the three biased schemes.
    pub fn reference() -> Self {
        let params = ZipfParams {
            c: 1e5,
            beta: 0.7745,
        };
        ExperimentConfig {
            population: PopulationSpec::new(params, 1_000_000).expect("valid reference population"),
            schemes: vec![Scheme::Nonuniform, Scheme::Noisy, Scheme::Sketchy],
            sample_sizes: DEFAULT_SAMPLE_SIZES.to_vec(),
            methods: vec![FitMethod::Nls, FitMethod::CsnMax],
            replicates: DEFAULT_REPLICATES,
            base_seed: DEFAULT_SEED,
            binned: false,
            binning: None,
            bias: BiasParams::default(),
            gamma_hint: None,
            jobs: None,
        }
    }

    /// Ladder with ratio 1.2324 from `l_0 = V_N` up past `2c`, so that sketch
    /// overestimates stay inside the top bin.
    pub fn default_binning(&self) -> Result<BinningScheme> {
        BinningScheme::covering(
            self.population.min_volume,
            SEARCHVOLUME_RATIO,
            2.0 * self.population.params.c,
        )
    }

    pub fn binning_scheme(&self) -> Result<BinningScheme> {
        match self.binning {
            Some(s) => {
                s.validate()?;
                Ok(s)
            }
            None => self.default_binning(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.population.params.validate()?;
        self.bias.validate()?;
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if self.schemes.is_empty() || self.methods.is_empty() || self.sample_sizes.is_empty() {
            return Err(Error::InvalidParameter(
                "schemes, methods and sample sizes must be non-empty".into(),
            ));
        }
        if let Some(&n) = self
            .sample_sizes
            .iter()
            .find(|&&n| n == 0 || n as u64 > self.population.n_queries)
        {
            return Err(Error::InvalidParameter(format!(
                "sample size {n} must lie in 1..={}",
                self.population.n_queries
            )));
        }
        if let Some(m) = self.methods.iter().find(|m| m.is_binned() != self.binned) {
            return Err(Error::InvalidParameter(format!(
                "method {m} does not match binned = {}",
                self.binned
            )));
        }
        if let Some(g) = self.gamma_hint {
            if !(g >= 0.0) {
                return Err(Error::InvalidParameter(format!("gamma hint must be >= 0, got {g}")));
            }
        }
        if self.jobs == Some(0) {
            return Err(Error::InvalidParameter("jobs must be >= 1".into()));
        }
        if self.binned {
            self.binning_scheme()?;
        }
        Ok(())
    }
}

/// What one replicate produced for one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateEstimate {
    pub params: ZipfParams,
    /// `N_v` at `v = V_N`.
    pub n_hat: f64,
    /// `V_v` at `v = V_N`.
    pub v_hat: f64,
    pub fallback: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicateOutcome {
    pub replicate: usize,
    pub includes_rank_one: bool,
    /// Sum of the observed sample volumes.
    pub empirical_volume: f64,
    pub estimate: std::result::Result<ReplicateEstimate, String>,
}

/// Mean and sample standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(values: &[f64]) -> MeanSd {
        let n = values.len() as f64;
        if values.is_empty() {
            return MeanSd {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }

    /// Standard error of the mean over `n` values.
    pub fn stderr(&self, n: usize) -> f64 {
        self.sd / (n as f64).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub scheme: Scheme,
    pub sample_size: usize,
    pub method: FitMethod,
    pub replicates: usize,
    /// Replicates whose fit failed; excluded from the statistics below.
    pub failures: usize,
    /// Replicates that fell back to the solver's starting point.
    pub fallbacks: usize,
    pub c: MeanSd,
    pub beta: MeanSd,
    pub n_hat: MeanSd,
    pub v_hat: MeanSd,
    pub include_v1_fraction: f64,
}

impl CellStats {
    pub fn successes(&self) -> usize {
        self.replicates - self.failures
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStats {
    pub true_volume: f64,
    pub true_count: u64,
    pub cells: Vec<CellStats>,
}

impl AggregateStats {
    pub fn cell(&self, scheme: Scheme, sample_size: usize, method: FitMethod) -> Option<&CellStats> {
        self.cells
            .iter()
            .find(|c| c.scheme == scheme && c.sample_size == sample_size && c.method == method)
    }
}

/// Shared, read-only state for one experiment.
struct Harness<'a> {
    config: &'a ExperimentConfig,
    population: Vec<f64>,
    binning: Option<BinningScheme>,
}

impl<'a> Harness<'a> {
    fn new(config: &'a ExperimentConfig) -> Result<Self> {
        config.validate()?;
        Ok(Harness {
            config,
            population: build_population(&config.population)?,
            binning: if config.binned {
                Some(config.binning_scheme()?)
            } else {
                None
            },
        })
    }

    fn draw(&self, scheme: Scheme, n: usize, replicate: usize) -> Result<ContinuousSample> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.base_seed);
        rng.set_stream(replicate as u64);
        draw_sample(&self.population, scheme, n, &self.config.bias, &mut rng)
    }

    fn estimate(&self, sample: &ContinuousSample, method: FitMethod) -> Result<ReplicateEstimate> {
        let fit = match self.binning {
            Some(scheme) => fit_binned(&bin_volumes(&scheme, sample)?, method, self.config.gamma_hint)?,
            None => fit_continuous(sample, method)?,
        };
        let floor = self.config.population.min_volume;
        Ok(ReplicateEstimate {
            params: fit.params,
            n_hat: estimate_query_count(fit.params, floor),
            v_hat: estimate_total_volume(fit.params, floor)?,
            fallback: fit.fallback,
        })
    }

    /// Outcomes per method for every replicate of one `(scheme, n)` cell, in
    /// replicate order.
    fn run_cell(&self, scheme: Scheme, n: usize) -> Vec<Vec<ReplicateOutcome>> {
        let per_replicate = |r: usize| -> Vec<ReplicateOutcome> {
            let methods = &self.config.methods;
            match self.draw(scheme, n, r) {
                Ok(sample) => methods
                    .iter()
                    .map(|&m| ReplicateOutcome {
                        replicate: r,
                        includes_rank_one: sample.includes_rank_one().unwrap_or(false),
                        empirical_volume: sample.total_volume(),
                        estimate: self.estimate(&sample, m).map_err(|e| e.to_string()),
                    })
                    .collect(),
                Err(e) => methods
                    .iter()
                    .map(|_| ReplicateOutcome {
                        replicate: r,
                        includes_rank_one: false,
                        empirical_volume: f64::NAN,
                        estimate: Err(e.to_string()),
                    })
                    .collect(),
            }
        };
        let rows: Vec<Vec<ReplicateOutcome>> =
            (0..self.config.replicates).into_par_iter().map(per_replicate).collect();
        // Transpose to one vector per method.
        let mut by_method: Vec<Vec<ReplicateOutcome>> =
            vec![Vec::with_capacity(rows.len()); self.config.methods.len()];
        for row in rows {
            for (k, outcome) in row.into_iter().enumerate() {
                by_method[k].push(outcome);
            }
        }
        by_method
    }
}

fn in_pool<T: Send>(jobs: Option<usize>, work: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(work()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::InvalidParameter(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

fn summarize(
    scheme: Scheme,
    sample_size: usize,
    method: FitMethod,
    outcomes: &[ReplicateOutcome],
) -> CellStats {
    let ok: Vec<&ReplicateEstimate> = outcomes.iter().filter_map(|o| o.estimate.as_ref().ok()).collect();
    let column = |f: fn(&ReplicateEstimate) -> f64| MeanSd::of(&ok.iter().map(|e| f(e)).collect::<Vec<_>>());
    CellStats {
        scheme,
        sample_size,
        method,
        replicates: outcomes.len(),
        failures: outcomes.len() - ok.len(),
        fallbacks: ok.iter().filter(|e| e.fallback).count(),
        c: column(|e| e.params.c),
        beta: column(|e| e.params.beta),
        n_hat: column(|e| e.n_hat),
        v_hat: column(|e| e.v_hat),
        include_v1_fraction: outcomes.iter().filter(|o| o.includes_rank_one).count() as f64
            / outcomes.len() as f64,
    }
}

/// Raw per-replicate outcomes of one `(scheme, n, method)` cell.
pub fn run_cell(
    config: &ExperimentConfig,
    scheme: Scheme,
    sample_size: usize,
    method: FitMethod,
) -> Result<Vec<ReplicateOutcome>> {
    let k = config
        .methods
        .iter()
        .position(|&m| m == method)
        .ok_or_else(|| Error::InvalidParameter(format!("method {method} is not configured")))?;
    let harness = Harness::new(config)?;
    let mut by_method = in_pool(config.jobs, || harness.run_cell(scheme, sample_size))?;
    Ok(by_method.swap_remove(k))
}

/// Runs every `(scheme, n)` cell and summarizes each method's estimates.
///
/// Failed replicates are counted and left out of the means.
pub fn run_monte_carlo(config: &ExperimentConfig) -> Result<AggregateStats> {
    let harness = Harness::new(config)?;
    let cells = in_pool(config.jobs, || {
        let mut cells = Vec::new();
        for &scheme in &config.schemes {
            for &n in &config.sample_sizes {
                let by_method = harness.run_cell(scheme, n);
                for (&method, outcomes) in config.methods.iter().zip(&by_method) {
                    cells.push(summarize(scheme, n, method, outcomes));
                }
            }
        }
        cells
    })?;
    Ok(AggregateStats {
        true_volume: total_volume(&config.population)?,
        true_count: config.population.n_queries,
        cells,
    })
}

/// One point of the estimated-versus-empirical total volume scatter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatterRecord {
    pub scheme: Scheme,
    pub sample_size: usize,
    pub method: FitMethod,
    pub replicate: usize,
    pub empirical_volume: f64,
    /// `NaN` when the fit failed.
    pub estimated_volume: f64,
    pub includes_rank1: bool,
}

/// Per-replicate total-volume estimates next to the observed sample totals.
pub fn scatter_empirical_vs_estimated(config: &ExperimentConfig) -> Result<Vec<ScatterRecord>> {
    let harness = Harness::new(config)?;
    in_pool(config.jobs, || {
        let mut out = Vec::new();
        for &scheme in &config.schemes {
            for &n in &config.sample_sizes {
                let by_method = harness.run_cell(scheme, n);
                for (&method, outcomes) in config.methods.iter().zip(by_method) {
                    out.extend(outcomes.into_iter().map(|o| ScatterRecord {
                        scheme,
                        sample_size: n,
                        method,
                        replicate: o.replicate,
                        empirical_volume: o.empirical_volume,
                        estimated_volume: o.estimate.map_or(f64::NAN, |e| e.v_hat),
                        includes_rank1: o.includes_rank_one,
                    }));
                }
            }
        }
        out
    })
}

/// `V_v` at `v = c / N^beta_true` for each `beta_hat` in the grid, holding `c` fixed.
pub fn volume_sensitivity_sweep(
    c: f64,
    n_queries: u64,
    beta_true: f64,
    beta_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let truth = PopulationSpec::new(ZipfParams::new(c, beta_true)?, n_queries)?;
    beta_grid
        .iter()
        .map(|&b| {
            let v = estimate_total_volume(ZipfParams::new(c, b)?, truth.min_volume)?;
            Ok((b, v))
        })
        .collect()
}

/// Draws the sample of replicate `replicate` exactly as the harness does.
pub fn replicate_sample(
    config: &ExperimentConfig,
    scheme: Scheme,
    sample_size: usize,
    replicate: usize,
) -> Result<ContinuousSample> {
    let harness = Harness::new(config)?;
    harness.draw(scheme, sample_size, replicate)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            population: PopulationSpec::new(ZipfParams::new(1e4, 0.8).unwrap(), 20_000).unwrap(),
            schemes: vec![Scheme::Nonuniform, Scheme::Noisy],
            sample_sizes: vec![300],
            methods: vec![FitMethod::Nls, FitMethod::CsnMax],
            replicates: 6,
            ..ExperimentConfig::reference()
        }
    }

    #[test]
    fn reproducible_and_thread_independent() {
        let a = run_monte_carlo(&small()).unwrap();
        let b = run_monte_carlo(&ExperimentConfig {
            jobs: Some(1),
            ..small()
        })
        .unwrap();
        assert_eq!(a, b);
        assert_eq!(a.cells.len(), 4);
    }

    #[test]
    fn full_population_is_exact() {
        let pop = PopulationSpec::new(ZipfParams::new(1e3, 0.7745).unwrap(), 2_000).unwrap();
        let config = ExperimentConfig {
            population: pop,
            schemes: vec![Scheme::Nonuniform],
            sample_sizes: vec![2_000],
            methods: vec![FitMethod::Nls],
            replicates: 3,
            ..ExperimentConfig::reference()
        };
        let truth = total_volume(&pop).unwrap();
        for o in run_cell(&config, Scheme::Nonuniform, 2_000, FitMethod::Nls).unwrap() {
            assert!(o.includes_rank_one);
            assert!((o.empirical_volume - truth).abs() < 1e-6 * truth);
            let est = o.estimate.unwrap();
            assert!((est.v_hat - truth).abs() < 1e-4 * truth, "{est:?}");
        }
    }

    #[test]
    fn scatter_matches_samples() {
        let config = ExperimentConfig {
            methods: vec![FitMethod::Nls],
            schemes: vec![Scheme::Sketchy],
            replicates: 3,
            ..small()
        };
        let records = scatter_empirical_vs_estimated(&config).unwrap();
        assert_eq!(records.len(), 3);
        for r in &records {
            let s = replicate_sample(&config, Scheme::Sketchy, 300, r.replicate).unwrap();
            assert_eq!(r.empirical_volume, s.total_volume());
            assert_eq!(r.includes_rank1, s.includes_rank_one().unwrap());
        }
    }

    #[test]
    fn sweep() {
        let grid = [0.7, 0.7745, 0.85];
        let out = volume_sensitivity_sweep(1e5, 1_000_000, 0.7745, &grid).unwrap();
        assert!((out[1].1 - 9_609_224.0).abs() <= 1.0, "{:?}", out[1]);
        assert!(out[0].1 > out[1].1 && out[1].1 > out[2].1);
        let one = volume_sensitivity_sweep(1e5, 1_000_000, 0.7745, &[0.8]).unwrap();
        let floor = 1e5 / 1e6f64.powf(0.7745);
        let direct = estimate_total_volume(ZipfParams::new(1e5, 0.8).unwrap(), floor).unwrap();
        assert_eq!(one, vec![(0.8, direct)]);
    }

    #[test]
    fn invalid_configs() {
        let bad = [
            ExperimentConfig { replicates: 0, ..small() },
            ExperimentConfig { sample_sizes: vec![30_000], ..small() },
            ExperimentConfig { binned: true, ..small() },
            ExperimentConfig { methods: vec![FitMethod::Chi2], ..small() },
            ExperimentConfig { jobs: Some(0), ..small() },
        ];
        for config in bad {
            assert!(run_monte_carlo(&config).is_err(), "{config:?}");
        }
    }

    #[test]
    fn mean_sd() {
        let m = MeanSd::of(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        assert!((m.sd - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert_eq!(MeanSd::of(&[7.0]).sd, 0.0);
        assert!(MeanSd::of(&[]).mean.is_nan());
    }
}
