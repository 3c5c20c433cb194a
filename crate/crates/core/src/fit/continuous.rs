use super::{FitMethod, FitResult};
use crate::error::{Error, Result};
use crate::model::ZipfParams;
use crate::numerics::{linearized_stderr, nls_solve, NlsSolution, Residuals, SolverOptions};
use crate::sampling::ContinuousSample;
use crate::uncertainty::ParamErrors;

/// Fewest observations a tail fit may use.
pub const MIN_TAIL: usize = 10;

/// Continuous power-law tail fit with its selected cutoff.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CsnFit {
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub cutoff_volume: f64,
    /// Size of the fitted tail, which is the sample rank of the cutoff.
    pub cutoff_rank: usize,
    pub ks_distance: f64,
}

impl CsnFit {
    pub fn beta(&self) -> f64 {
        1.0 / (self.alpha - 1.0)
    }

    /// `delta_beta = delta_alpha / (alpha - 1)^2`.
    pub fn beta_stderr(&self) -> f64 {
        self.alpha_stderr / (self.alpha - 1.0).powi(2)
    }
}

/// Power-law tail fit with the cutoff chosen by minimum KS distance.
///
/// Every distinct observed value that leaves at least [`MIN_TAIL`] points at
/// or above it is tried as `x_min`. For each, `alpha = 1 + m / sum ln(v / x_min)`
/// and the KS distance of the tail to `1 - (v / x_min)^(1 - alpha)` is computed.
/// Ties go to the larger tail.
pub fn csn_fit(sample: &ContinuousSample) -> Result<CsnFit> {
    let v = sample.volumes();
    let n = v.len();
    if n < MIN_TAIL {
        return Err(Error::InsufficientData {
            what: "observations for a power-law tail fit",
            needed: MIN_TAIL,
            got: n,
        });
    }
    if v[0] == v[n - 1] {
        return Err(Error::Domain("all volumes are equal; no tail to fit".into()));
    }
    let logs: Vec<f64> = v.iter().map(|x| x.ln()).collect();
    let mut best: Option<CsnFit> = None;
    let mut log_sum = 0.0;
    for m in 1..=n {
        log_sum += logs[m - 1];
        if m < MIN_TAIL || (m < n && v[m] == v[m - 1]) {
            continue;
        }
        let log_min = logs[m - 1];
        let spread = log_sum - m as f64 * log_min;
        if !(spread > 0.0) {
            continue;
        }
        let alpha = 1.0 + m as f64 / spread;
        let bound = best.map_or(f64::INFINITY, |b| b.ks_distance);
        let ks = tail_ks_bounded(&logs[..m], log_min, alpha, bound);
        if ks <= bound {
            best = Some(CsnFit {
                alpha,
                alpha_stderr: (alpha - 1.0) / (m as f64).sqrt(),
                cutoff_volume: v[m - 1],
                cutoff_rank: m,
                ks_distance: ks,
            });
        }
    }
    best.ok_or(Error::InsufficientData {
        what: "distinct tail values for a power-law fit",
        needed: 2,
        got: 1,
    })
}

/// KS distance between a descending tail (given by its logs) and the Pareto
/// law with exponent `alpha` above `exp(log_min)`.
fn tail_ks(desc_logs: &[f64], log_min: f64, alpha: f64) -> f64 {
    tail_ks_bounded(desc_logs, log_min, alpha, f64::INFINITY)
}

/// As [`tail_ks`], but gives up (returning a value above `bound`) as soon as
/// the distance is known to exceed `bound`.
fn tail_ks_bounded(desc_logs: &[f64], log_min: f64, alpha: f64, bound: f64) -> f64 {
    let m = desc_logs.len() as f64;
    let mut worst = 0.0f64;
    // Walk ascending: the k-th smallest value sits at index len - 1 - k.
    for (k, &lx) in desc_logs.iter().rev().enumerate() {
        let cdf = -((1.0 - alpha) * (lx - log_min)).exp_m1();
        worst = worst.max((k + 1) as f64 / m - cdf).max(cdf - k as f64 / m);
        if worst > bound {
            return worst;
        }
    }
    worst.clamp(0.0, 1.0)
}

/// `beta = 1 / (alpha - 1)`.
pub fn beta_from_alpha(alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("power-law exponent must exceed 1, got {alpha}")));
    }
    Ok(1.0 / (alpha - 1.0))
}

/// Least squares of `ln v_i` on `ln i` over the top `max_rank` observations.
///
/// Returns `(e^intercept, -slope)` unvalidated, so flat data gives `beta = 0`.
pub fn ols_loglog_init(sample: &ContinuousSample, max_rank: usize) -> Result<ZipfParams> {
    check_max_rank(sample, max_rank)?;
    let m = max_rank as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for (i, v) in sample.volumes()[..max_rank].iter().enumerate() {
        let x = ((i + 1) as f64).ln();
        let y = v.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let slope = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    let intercept = (sy - slope * sx) / m;
    Ok(ZipfParams {
        c: intercept.exp(),
        beta: -slope,
    })
}

fn check_max_rank(sample: &ContinuousSample, max_rank: usize) -> Result<()> {
    if max_rank < 3 || max_rank > sample.len() {
        return Err(Error::InsufficientData {
            what: "ranks for a rank-volume regression",
            needed: 3.max(max_rank),
            got: sample.len().min(max_rank),
        });
    }
    Ok(())
}

/// Top observed volume `v_1`.
pub fn max_estimator_c(sample: &ContinuousSample) -> Result<f64> {
    sample.volumes().first().copied().ok_or(Error::InsufficientData {
        what: "observations for the max estimator",
        needed: 1,
        got: 0,
    })
}

struct RankVolume<'a> {
    volumes: &'a [f64],
    log_ranks: Vec<f64>,
}

impl Residuals for RankVolume<'_> {
    fn len(&self) -> usize {
        self.volumes.len()
    }

    fn residuals(&self, p: [f64; 2], out: &mut [f64]) {
        for ((o, v), lr) in out.iter_mut().zip(self.volumes).zip(&self.log_ranks) {
            *o = v - p[0] * (-p[1] * lr).exp();
        }
    }

    fn jacobian(&self, p: [f64; 2], out: &mut [[f64; 2]]) {
        for (row, lr) in out.iter_mut().zip(&self.log_ranks) {
            let decay = (-p[1] * lr).exp();
            *row = [-decay, p[0] * lr * decay];
        }
    }
}

/// Least squares of `v_i - c / i^beta` over ranks `1..=max_rank`, started
/// from [`ols_loglog_init`].
///
/// If the solver does not converge the starting point is returned with
/// `fallback` set.
pub fn nls_zipf_fit(
    sample: &ContinuousSample,
    max_rank: usize,
    opts: &SolverOptions,
) -> Result<FitResult> {
    check_max_rank(sample, max_rank)?;
    let init = ols_loglog_init(sample, max_rank)?;
    let problem = RankVolume {
        volumes: &sample.volumes()[..max_rank],
        log_ranks: (1..=max_rank).map(|i| (i as f64).ln()).collect(),
    };
    let (params, errors, fallback) = match nls_solve(&problem, [init.c, init.beta], opts) {
        Ok(sol) => {
            let params = ZipfParams::new(sol.params[0], sol.params[1])?;
            (params, stderr_of(&sol)?, false)
        }
        Err(Error::NonConvergence { .. }) => {
            let params = ZipfParams::new(init.c, init.beta)?;
            let mut r = vec![0.0; max_rank];
            let mut j = vec![[0.0; 2]; max_rank];
            problem.residuals([init.c, init.beta], &mut r);
            problem.jacobian([init.c, init.beta], &mut j);
            let errors = linearized_stderr(&j, &r)
                .map(|(dc, db)| ParamErrors {
                    delta_c: dc,
                    delta_beta: db,
                })
                .unwrap_or(ParamErrors {
                    delta_c: f64::NAN,
                    delta_beta: f64::NAN,
                });
            (params, errors, true)
        }
        Err(e) => return Err(e),
    };
    let cutoff_volume = sample.volumes()[max_rank - 1];
    let alpha = 1.0 + 1.0 / params.beta;
    let logs: Vec<f64> = sample.volumes()[..max_rank].iter().map(|v| v.ln()).collect();
    Ok(FitResult {
        params,
        errors,
        cutoff_rank: max_rank,
        cutoff_volume,
        method: FitMethod::Nls,
        ks_distance: tail_ks(&logs, cutoff_volume.ln(), alpha),
        alpha: None,
        fallback,
    })
}

fn stderr_of(sol: &NlsSolution) -> Result<ParamErrors> {
    let (dc, db) = linearized_stderr(&sol.jacobian, &sol.residuals)?;
    Ok(ParamErrors {
        delta_c: dc,
        delta_beta: db,
    })
}

/// Fits a continuous sample with `NLS` or `CSN_MAX`.
pub fn fit_continuous(sample: &ContinuousSample, method: FitMethod) -> Result<FitResult> {
    fit_continuous_with(sample, method, &SolverOptions::default())
}

pub fn fit_continuous_with(
    sample: &ContinuousSample,
    method: FitMethod,
    opts: &SolverOptions,
) -> Result<FitResult> {
    let tail = csn_fit(sample)?;
    match method {
        FitMethod::CsnMax => Ok(FitResult {
            params: ZipfParams::new(max_estimator_c(sample)?, tail.beta())?,
            errors: ParamErrors {
                delta_c: 0.0,
                delta_beta: tail.beta_stderr(),
            },
            cutoff_rank: tail.cutoff_rank,
            cutoff_volume: tail.cutoff_volume,
            method,
            ks_distance: tail.ks_distance,
            alpha: Some(tail.alpha),
            fallback: false,
        }),
        FitMethod::Nls => nls_zipf_fit(sample, tail.cutoff_rank, opts),
        _ => Err(Error::InvalidParameter(format!(
            "{method} needs a binned sample"
        ))),
    }
}
