use super::{FitMethod, FitResult, MIN_TAIL};
use crate::error::{Error, Result};
use crate::model::ZipfParams;
use crate::numerics::{
    golden_section_minimize, linearized_stderr, linearized_stderr_single, simplex_minimize,
    SolverOptions,
};
use crate::sampling::{BinnedSample, BinningScheme};
use crate::uncertainty::ParamErrors;

/// Floor applied to expected counts inside the chi-square objective.
const EXPECTED_FLOOR: f64 = 1e-9;
/// Objective value reported where the model overflows.
const OBJECTIVE_CEILING: f64 = 1e300;
const MIN_TAIL_BINS: usize = 3;
const ALPHA_RANGE: (f64, f64) = (1.0 + 1e-6, 50.0);

/// A binned sample with the first bin to fit from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedFitInputs<'a> {
    pub sample: &'a BinnedSample,
    pub from_bin: usize,
    pub gamma_hint: Option<f64>,
}

impl<'a> BinnedFitInputs<'a> {
    pub fn new(sample: &'a BinnedSample, from_bin: usize) -> Result<Self> {
        if from_bin == 0 || from_bin > sample.scheme.bin_count {
            return Err(Error::InvalidParameter(format!(
                "first bin {from_bin} outside 1..={}",
                sample.scheme.bin_count
            )));
        }
        Ok(BinnedFitInputs {
            sample,
            from_bin,
            gamma_hint: None,
        })
    }

    /// Last bin of the ladder; the chi-square sums run through empty top bins too.
    fn last_bin(&self) -> usize {
        self.sample.scheme.bin_count
    }

    fn included(&self) -> std::ops::RangeInclusive<usize> {
        self.from_bin..=self.last_bin()
    }

    fn included_bins(&self) -> usize {
        self.last_bin().saturating_sub(self.from_bin - 1)
    }

    fn tail_count(&self) -> f64 {
        self.sample.counts[self.from_bin - 1..].iter().sum()
    }

    fn require_bins(&self, needed: usize) -> Result<()> {
        if self.included_bins() < needed {
            return Err(Error::InsufficientData {
                what: "bins at or above the first fitted bin",
                needed,
                got: self.included_bins(),
            });
        }
        Ok(())
    }
}

/// Binned power-law tail fit with its selected first bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BinnedCsnFit {
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub from_bin: usize,
    pub ks_distance: f64,
}

impl BinnedCsnFit {
    pub fn beta(&self) -> f64 {
        1.0 / (self.alpha - 1.0)
    }

    pub fn beta_stderr(&self) -> f64 {
        self.alpha_stderr / (self.alpha - 1.0).powi(2)
    }
}

/// `ln(l_{j-1}^(1-alpha) - l_j^(1-alpha))`, factored to stay finite for large alpha.
fn log_bin_mass(lo: f64, hi: f64, alpha: f64) -> f64 {
    let e = 1.0 - alpha;
    e * lo.ln() + (-(e * (hi / lo).ln()).exp_m1()).ln()
}

fn log_likelihood(sample: &BinnedSample, from_bin: usize, alpha: f64) -> f64 {
    let s = &sample.scheme;
    let mut total = 0.0;
    let mut ll = 0.0;
    for j in from_bin..=s.bin_count {
        let n = sample.counts[j - 1];
        if n > 0.0 {
            ll += n * log_bin_mass(s.edge(j - 1), s.edge(j), alpha);
            total += n;
        }
    }
    ll + total * (alpha - 1.0) * s.edge(from_bin - 1).ln()
}

/// Maximum-likelihood exponent and its standard error for the tail from `from_bin`.
fn tail_mle(sample: &BinnedSample, from_bin: usize) -> (f64, f64) {
    let alpha = golden_section_minimize(
        |a| -log_likelihood(sample, from_bin, a),
        ALPHA_RANGE.0,
        ALPHA_RANGE.1,
        1e-12,
    );
    let h = 1e-4 * alpha;
    let (lo, mid, hi) = (
        log_likelihood(sample, from_bin, alpha - h),
        log_likelihood(sample, from_bin, alpha),
        log_likelihood(sample, from_bin, alpha + h),
    );
    let curvature = -(hi - 2.0 * mid + lo) / (h * h);
    let stderr = if curvature > 0.0 {
        1.0 / curvature.sqrt()
    } else {
        f64::NAN
    };
    (alpha, stderr)
}

/// KS distance between the empirical and Pareto CCDFs at the bin edges from
/// `l_{from_bin - 1}` up to the top of the last non-empty bin.
pub fn binned_ks_distance(sample: &BinnedSample, from_bin: usize, alpha: f64) -> f64 {
    let inputs = BinnedFitInputs {
        sample,
        from_bin,
        gamma_hint: None,
    };
    let s = &sample.scheme;
    let total = inputs.tail_count();
    if !(total > 0.0) {
        return 1.0;
    }
    let base = s.edge(from_bin - 1);
    let mut above = total;
    let mut worst = 0.0f64;
    for j in inputs.included() {
        let model = (s.edge(j - 1) / base).powf(1.0 - alpha);
        worst = worst.max((above / total - model).abs());
        above -= sample.counts[j - 1];
    }
    let top = (s.edge(inputs.last_bin()) / base).powf(1.0 - alpha);
    worst.max(top).clamp(0.0, 1.0)
}

/// Binned analogue of the continuous tail fit.
///
/// Every first bin `b` leaving at least three non-empty bins and ten
/// observations is tried; the exponent maximizing the binned likelihood is found
/// by golden-section search, and the `b` with the smallest KS distance on the
/// bin edges wins (ties to the larger tail).
pub fn binned_csn_fit(sample: &BinnedSample) -> Result<BinnedCsnFit> {
    let non_empty = sample.non_empty_bins();
    if non_empty < MIN_TAIL_BINS {
        return Err(Error::InsufficientData {
            what: "non-empty bins for a binned tail fit",
            needed: MIN_TAIL_BINS,
            got: non_empty,
        });
    }
    let mut best: Option<BinnedCsnFit> = None;
    let mut bins_above = non_empty;
    let mut count_above = sample.total();
    for b in 1..=sample.scheme.bin_count {
        if bins_above < MIN_TAIL_BINS || count_above < MIN_TAIL as f64 {
            break;
        }
        let n_b = sample.counts[b - 1];
        // An empty first bin only lowers the likelihood's cutoff; skip it.
        if n_b > 0.0 {
            let (alpha, alpha_stderr) = tail_mle(sample, b);
            let ks = binned_ks_distance(sample, b, alpha);
            if best.is_none_or(|f| ks < f.ks_distance - 1e-12) {
                best = Some(BinnedCsnFit {
                    alpha,
                    alpha_stderr,
                    from_bin: b,
                    ks_distance: ks,
                });
            }
            bins_above -= 1;
        }
        count_above -= n_b;
    }
    best.ok_or(Error::InsufficientData {
        what: "observations in a binned tail",
        needed: MIN_TAIL,
        got: sample.total() as usize,
    })
}

/// Expected counts `(c / l_{j-1})^(1/beta) - (c / l_j)^(1/beta)` for bins
/// `from_bin..=M`.
pub fn expected_bin_counts(
    params: ZipfParams,
    scheme: &BinningScheme,
    from_bin: usize,
) -> Result<Vec<f64>> {
    params.validate()?;
    scheme.validate()?;
    if from_bin == 0 || from_bin > scheme.bin_count {
        return Err(Error::InvalidParameter(format!(
            "first bin {from_bin} outside 1..={}",
            scheme.bin_count
        )));
    }
    if scheme.edge(from_bin - 1) > params.c {
        return Err(Error::Domain(format!(
            "first bin starts at {} above the intercept {}",
            scheme.edge(from_bin - 1),
            params.c
        )));
    }
    Ok(expected_range(params.c, params.beta, scheme, from_bin, scheme.bin_count))
}

fn expected_range(c: f64, beta: f64, s: &BinningScheme, from: usize, to: usize) -> Vec<f64> {
    let above = |edge: f64| ((c / edge).ln() / beta).exp();
    (from..=to).map(|j| above(s.edge(j - 1)) - above(s.edge(j))).collect()
}

fn pearson_residuals(c: f64, beta: f64, inputs: &BinnedFitInputs, out: &mut Vec<f64>) {
    let s = &inputs.sample.scheme;
    out.clear();
    let expected = expected_range(c, beta, s, inputs.from_bin, inputs.last_bin());
    for (j, e) in inputs.included().zip(expected) {
        let e = e.max(EXPECTED_FLOOR);
        out.push((inputs.sample.counts[j - 1] - e) / e.sqrt());
    }
}

fn objective_value(c: f64, beta: f64, inputs: &BinnedFitInputs) -> f64 {
    let s = &inputs.sample.scheme;
    let expected = expected_range(c, beta, s, inputs.from_bin, inputs.last_bin());
    let mut total = 0.0;
    for (j, e) in inputs.included().zip(expected) {
        if e.is_infinite() {
            return OBJECTIVE_CEILING;
        }
        let e = e.max(EXPECTED_FLOOR);
        total += (inputs.sample.counts[j - 1] - e).powi(2) / e;
    }
    if total.is_infinite() {
        OBJECTIVE_CEILING
    } else {
        total
    }
}

/// Pearson's chi-square `sum (n_o - n_e)^2 / n_e` over the included bins.
pub fn chisq_objective(params: ZipfParams, inputs: &BinnedFitInputs) -> Result<f64> {
    params.validate()?;
    let value = objective_value(params.c, params.beta, inputs);
    if value.is_nan() {
        return Err(Error::NonFiniteObjective {
            params: vec![params.c, params.beta],
        });
    }
    Ok(value)
}

fn central_jacobian<F>(f: F, p: [f64; 2], rows: usize) -> Vec<[f64; 2]>
where
    F: Fn([f64; 2], &mut Vec<f64>),
{
    let mut jac = vec![[0.0; 2]; rows];
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    for k in 0..2 {
        let h = 1e-6 * p[k].abs().max(1e-12);
        let (mut a, mut b) = (p, p);
        a[k] += h;
        b[k] -= h;
        f(a, &mut plus);
        f(b, &mut minus);
        for (row, (x, y)) in jac.iter_mut().zip(plus.iter().zip(&minus)) {
            row[k] = (x - y) / (2.0 * h);
        }
    }
    jac
}

fn fit_result(
    inputs: &BinnedFitInputs,
    params: ZipfParams,
    errors: ParamErrors,
    method: FitMethod,
    alpha: Option<f64>,
) -> FitResult {
    let sample = inputs.sample;
    FitResult {
        params,
        errors,
        cutoff_rank: inputs.tail_count().round() as usize,
        cutoff_volume: sample.scheme.edge(inputs.from_bin - 1),
        method,
        ks_distance: binned_ks_distance(sample, inputs.from_bin, 1.0 + 1.0 / params.beta),
        alpha,
        fallback: false,
    }
}

/// Minimizes the chi-square over `(ln c, ln beta)` with Nelder-Mead.
///
/// Starts from the binned tail MLE for `beta` and the `c` that puts all tail
/// observations above the first edge. Standard errors linearize the Pearson
/// residuals `(n_o - n_e) / sqrt(n_e)`.
pub fn chisq_fit(inputs: &BinnedFitInputs, opts: &SolverOptions) -> Result<FitResult> {
    inputs.require_bins(3)?;
    let (alpha0, _) = tail_mle(inputs.sample, inputs.from_bin);
    let beta0 = 1.0 / (alpha0 - 1.0);
    let c0 = inputs.sample.scheme.edge(inputs.from_bin - 1) * inputs.tail_count().powf(beta0);
    let best = simplex_minimize(
        |p| objective_value(p[0].exp(), p[1].exp(), inputs),
        [c0.ln(), beta0.ln()],
        opts,
    )?;
    let params = ZipfParams::new(best[0].exp(), best[1].exp())?;
    let mut residuals = Vec::new();
    pearson_residuals(params.c, params.beta, inputs, &mut residuals);
    let jac = central_jacobian(
        |p, out| pearson_residuals(p[0], p[1], inputs, out),
        [params.c, params.beta],
        residuals.len(),
    );
    let (delta_c, delta_beta) = linearized_stderr(&jac, &residuals)?;
    Ok(fit_result(
        inputs,
        params,
        ParamErrors {
            delta_c,
            delta_beta,
        },
        FitMethod::Chi2,
        None,
    ))
}

/// Minimizes the chi-square over `c` alone with `beta` frozen.
///
/// `delta_beta` is carried through unchanged, since `beta` is not fitted here.
pub fn constrained_chisq_fit(
    inputs: &BinnedFitInputs,
    beta_fixed: f64,
    delta_beta: f64,
) -> Result<FitResult> {
    inputs.require_bins(2)?;
    if !(beta_fixed > 0.0) || !beta_fixed.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "frozen beta must be positive, got {beta_fixed}"
        )));
    }
    let c0 = inputs.sample.scheme.edge(inputs.from_bin - 1) * inputs.tail_count().powf(beta_fixed);
    let log_c = golden_section_minimize(
        |lc| objective_value(lc.exp(), beta_fixed, inputs),
        c0.ln() - 20.0,
        c0.ln() + 20.0,
        1e-14,
    );
    let params = ZipfParams::new(log_c.exp(), beta_fixed)?;
    let mut residuals = Vec::new();
    pearson_residuals(params.c, beta_fixed, inputs, &mut residuals);
    let h = 1e-6 * params.c;
    let (mut plus, mut minus) = (Vec::new(), Vec::new());
    pearson_residuals(params.c + h, beta_fixed, inputs, &mut plus);
    pearson_residuals(params.c - h, beta_fixed, inputs, &mut minus);
    let jac: Vec<f64> = plus.iter().zip(&minus).map(|(a, b)| (a - b) / (2.0 * h)).collect();
    let delta_c = linearized_stderr_single(&jac, &residuals)?;
    Ok(fit_result(
        inputs,
        params,
        ParamErrors {
            delta_c,
            delta_beta,
        },
        FitMethod::CsnConstrainedChi2,
        Some(1.0 + 1.0 / beta_fixed),
    ))
}

/// Keeps only bins whose lower edge is at least `10 gamma v_1`, `v_1` being
/// the largest reported volume.
pub fn sketchy_filter<'a>(inputs: &BinnedFitInputs<'a>, gamma: f64) -> Result<BinnedFitInputs<'a>> {
    if !(gamma >= 0.0) || !gamma.is_finite() {
        return Err(Error::InvalidParameter(format!("sketch fraction must be >= 0, got {gamma}")));
    }
    let mut out = BinnedFitInputs {
        gamma_hint: Some(gamma),
        ..*inputs
    };
    if gamma == 0.0 {
        return Ok(out);
    }
    let top = inputs.sample.top_reported().ok_or(Error::InsufficientData {
        what: "observations",
        needed: 1,
        got: 0,
    })?;
    let threshold = 10.0 * gamma * top;
    let s = &inputs.sample.scheme;
    let first_kept = (1..=s.bin_count)
        .find(|&j| s.edge(j - 1) >= threshold)
        .unwrap_or(s.bin_count + 1);
    out.from_bin = inputs.from_bin.max(first_kept);
    if out.from_bin > s.bin_count {
        return Err(Error::InsufficientData {
            what: "bins above the sketch threshold",
            needed: 3,
            got: 0,
        });
    }
    out.require_bins(3)?;
    Ok(out)
}

/// Fits a binned sample with `CHI2` or `CSN_CONSTRAINED_CHI2`.
pub fn fit_binned(
    sample: &BinnedSample,
    method: FitMethod,
    gamma_hint: Option<f64>,
) -> Result<FitResult> {
    fit_binned_with(sample, method, gamma_hint, &SolverOptions::default())
}

/// As [`fit_binned`]. With a `gamma_hint` the sketch filter raises the first
/// bin, and the constrained variant re-fits the tail exponent on what is left.
pub fn fit_binned_with(
    sample: &BinnedSample,
    method: FitMethod,
    gamma_hint: Option<f64>,
    opts: &SolverOptions,
) -> Result<FitResult> {
    if !method.is_binned() {
        return Err(Error::InvalidParameter(format!("{method} needs a continuous sample")));
    }
    let tail = binned_csn_fit(sample)?;
    let mut inputs = BinnedFitInputs::new(sample, tail.from_bin)?;
    if let Some(gamma) = gamma_hint {
        inputs = sketchy_filter(&inputs, gamma)?;
    }
    match method {
        FitMethod::Chi2 => chisq_fit(&inputs, opts),
        _ => {
            let (alpha, alpha_stderr) = if inputs.from_bin == tail.from_bin {
                (tail.alpha, tail.alpha_stderr)
            } else {
                tail_mle(sample, inputs.from_bin)
            };
            let beta = 1.0 / (alpha - 1.0);
            let mut fit = constrained_chisq_fit(&inputs, beta, alpha_stderr / (alpha - 1.0).powi(2))?;
            fit.alpha = Some(alpha);
            Ok(fit)
        }
    }
}
