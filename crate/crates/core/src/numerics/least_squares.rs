//! Damped Gauss–Newton (Levenberg–Marquardt) for two-parameter least squares,
//! and linearized standard errors at the solution.

use super::SolverOptions;
use crate::error::{Error, Result};

/// A residual vector depending on two parameters.
pub trait Residuals {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn residuals(&self, params: [f64; 2], out: &mut [f64]);

    /// Rows of `d residual_i / d params`. Defaults to central differences.
    fn jacobian(&self, params: [f64; 2], out: &mut [[f64; 2]]) {
        let n = self.len();
        let mut plus = vec![0.0; n];
        let mut minus = vec![0.0; n];
        for k in 0..2 {
            let h = 1e-6 * params[k].abs().max(1e-6);
            let mut p = params;
            p[k] = params[k] + h;
            self.residuals(p, &mut plus);
            p[k] = params[k] - h;
            self.residuals(p, &mut minus);
            for i in 0..n {
                out[i][k] = (plus[i] - minus[i]) / (2.0 * h);
            }
        }
    }
}

/// Adapts a closure returning the residual vector.
pub struct FnResiduals<F> {
    len: usize,
    f: F,
}

impl<F: Fn([f64; 2]) -> Vec<f64>> FnResiduals<F> {
    pub fn new(len: usize, f: F) -> Self {
        FnResiduals { len, f }
    }
}

impl<F: Fn([f64; 2]) -> Vec<f64>> Residuals for FnResiduals<F> {
    fn len(&self) -> usize {
        self.len
    }

    fn residuals(&self, params: [f64; 2], out: &mut [f64]) {
        out.copy_from_slice(&(self.f)(params));
    }
}

#[derive(Debug, Clone)]
pub struct NlsSolution {
    pub params: [f64; 2],
    pub residuals: Vec<f64>,
    pub jacobian: Vec<[f64; 2]>,
    pub iterations: usize,
}

impl NlsSolution {
    pub fn residual_sum_of_squares(&self) -> f64 {
        sum_sq(&self.residuals)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

/// Minimizes the sum of squared residuals starting from `init`.
///
/// Converges when the gradient is orthogonal to the residual vector up to
/// `relative_tolerance` (cosine test), when a step changes every parameter by
/// less than that relative amount, or when no damped step can lower the cost
/// any further. After `max_iterations` it retries from jittered starts and then
/// fails with [`Error::NonConvergence`] carrying the best point seen.
pub fn nls_solve<R: Residuals + ?Sized>(
    problem: &R,
    init: [f64; 2],
    opts: &SolverOptions,
) -> Result<NlsSolution> {
    opts.validate()?;
    if problem.len() < 3 {
        return Err(Error::InsufficientData {
            what: "residuals for a two-parameter fit",
            needed: 3,
            got: problem.len(),
        });
    }
    let mut best: Option<(f64, [f64; 2])> = None;
    let mut total_iterations = 0;
    for attempt in 0..=opts.restarts {
        let start = jitter(init, attempt);
        match levenberg_marquardt(problem, start, opts) {
            Attempt::Converged(sol) => return Ok(sol),
            Attempt::Exhausted { cost, params, iterations } => {
                total_iterations += iterations;
                if best.map_or(true, |(c, _)| cost < c) {
                    best = Some((cost, params));
                }
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: total_iterations,
        best: best.map_or(init, |(_, p)| p),
    })
}

fn jitter(init: [f64; 2], attempt: usize) -> [f64; 2] {
    if attempt == 0 {
        return init;
    }
    let f = 0.05 * attempt as f64;
    let sign = if attempt % 2 == 1 { 1.0 } else { -1.0 };
    [init[0] * (1.0 + sign * f), init[1] * (1.0 - sign * f)]
}

enum Attempt {
    Converged(NlsSolution),
    Exhausted {
        cost: f64,
        params: [f64; 2],
        iterations: usize,
    },
}

fn levenberg_marquardt<R: Residuals + ?Sized>(
    problem: &R,
    init: [f64; 2],
    opts: &SolverOptions,
) -> Attempt {
    let n = problem.len();
    let tol = opts.relative_tolerance;
    let mut p = init;
    let mut r = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    let mut jac = vec![[0.0; 2]; n];
    problem.residuals(p, &mut r);
    let mut cost = sum_sq(&r);
    let mut lambda = 1e-3;

    let finish = |p: [f64; 2], r: Vec<f64>, mut jac: Vec<[f64; 2]>, iterations| {
        problem.jacobian(p, &mut jac);
        Attempt::Converged(NlsSolution {
            params: p,
            residuals: r,
            jacobian: jac,
            iterations,
        })
    };

    if !cost.is_finite() {
        return Attempt::Exhausted {
            cost: f64::INFINITY,
            params: p,
            iterations: 0,
        };
    }
    if cost == 0.0 {
        return finish(p, r, jac, 0);
    }

    for iter in 0..opts.max_iterations {
        problem.jacobian(p, &mut jac);
        let (mut a11, mut a12, mut a22, mut g1, mut g2) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (row, &ri) in jac.iter().zip(&r) {
            a11 += row[0] * row[0];
            a12 += row[0] * row[1];
            a22 += row[1] * row[1];
            g1 += row[0] * ri;
            g2 += row[1] * ri;
        }
        let rnorm = cost.sqrt();
        let cosine = (g1.abs() / (a11.sqrt() * rnorm)).max(g2.abs() / (a22.sqrt() * rnorm));
        if cosine.is_nan() || cosine <= tol {
            return finish(p, r, jac, iter);
        }

        let d1 = a11.max(f64::MIN_POSITIVE);
        let d2 = a22.max(f64::MIN_POSITIVE);
        loop {
            let m11 = a11 + lambda * d1;
            let m22 = a22 + lambda * d2;
            let det = m11 * m22 - a12 * a12;
            let step = [(-g1 * m22 + g2 * a12) / det, (-g2 * m11 + g1 * a12) / det];
            let trial = [p[0] + step[0], p[1] + step[1]];
            let usable = det > 0.0 && trial.iter().all(|x| x.is_finite());
            let trial_cost = if usable {
                problem.residuals(trial, &mut r_trial);
                sum_sq(&r_trial)
            } else {
                f64::INFINITY
            };
            if trial_cost.is_finite() && trial_cost < cost {
                let reduction = (cost - trial_cost) / cost;
                let rel_step = (step[0] / p[0].abs().max(1e-300))
                    .abs()
                    .max((step[1] / p[1].abs().max(1e-300)).abs());
                p = trial;
                std::mem::swap(&mut r, &mut r_trial);
                cost = trial_cost;
                lambda = (lambda / 10.0).max(1e-15);
                if cost == 0.0 || rel_step <= tol || reduction <= tol * tol {
                    return finish(p, r, jac, iter + 1);
                }
                break;
            }
            lambda *= 10.0;
            if lambda > 1e20 {
                // No representable step lowers the cost.
                return finish(p, r, jac, iter + 1);
            }
        }
    }
    Attempt::Exhausted {
        cost,
        params: p,
        iterations: opts.max_iterations,
    }
}

/// Standard errors `sqrt(diag(s^2 (J^T J)^-1))` with `s^2 = RSS / (n - 2)`.
pub fn linearized_stderr(jacobian: &[[f64; 2]], residuals: &[f64]) -> Result<(f64, f64)> {
    let n = residuals.len();
    if n < 3 || jacobian.len() != n {
        return Err(Error::InsufficientData {
            what: "residuals for linearized standard errors",
            needed: 3,
            got: n.min(jacobian.len()),
        });
    }
    let (mut a11, mut a12, mut a22) = (0.0, 0.0, 0.0);
    for row in jacobian {
        a11 += row[0] * row[0];
        a12 += row[0] * row[1];
        a22 += row[1] * row[1];
    }
    let det = a11 * a22 - a12 * a12;
    if !(det > 1e-14 * a11 * a22) || !det.is_finite() {
        return Err(Error::Singular);
    }
    let s2 = sum_sq(residuals) / (n - 2) as f64;
    Ok(((s2 * a22 / det).sqrt(), (s2 * a11 / det).sqrt()))
}

/// One-parameter version of [`linearized_stderr`], with `s^2 = RSS / (n - 1)`.
pub fn linearized_stderr_single(jacobian: &[f64], residuals: &[f64]) -> Result<f64> {
    let n = residuals.len();
    if n < 2 || jacobian.len() != n {
        return Err(Error::InsufficientData {
            what: "residuals for linearized standard errors",
            needed: 2,
            got: n.min(jacobian.len()),
        });
    }
    let a: f64 = jacobian.iter().map(|x| x * x).sum();
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Singular);
    }
    let s2 = sum_sq(residuals) / (n - 1) as f64;
    Ok((s2 / a).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zipf_data(c: f64, beta: f64, m: usize) -> Vec<f64> {
        (1..=m).map(|i| c / (i as f64).powf(beta)).collect()
    }

    fn zipf_problem(data: Vec<f64>) -> FnResiduals<impl Fn([f64; 2]) -> Vec<f64>> {
        let n = data.len();
        FnResiduals::new(n, move |p: [f64; 2]| {
            data.iter()
                .enumerate()
                .map(|(i, v)| v - p[0] / ((i + 1) as f64).powf(p[1]))
                .collect()
        })
    }

    #[test]
    fn recovers_exact_parameters() {
        let problem = zipf_problem(zipf_data(100.0, 0.5, 50));
        let sol = nls_solve(&problem, [50.0, 1.0], &SolverOptions::default()).unwrap();
        assert!((sol.params[0] - 100.0).abs() < 1e-6, "{:?}", sol.params);
        assert!((sol.params[1] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn zero_residual_start_is_returned_unchanged() {
        let problem = zipf_problem(zipf_data(100.0, 0.5, 50));
        let sol = nls_solve(&problem, [100.0, 0.5], &SolverOptions::default()).unwrap();
        assert_eq!(sol.params, [100.0, 0.5]);
        assert_eq!(sol.iterations, 0);
    }

    #[test]
    fn too_few_residuals() {
        let problem = zipf_problem(zipf_data(100.0, 0.5, 2));
        assert!(nls_solve(&problem, [1.0, 1.0], &SolverOptions::default()).is_err());
    }

    #[test]
    fn non_convergence_reports_best_point() {
        let problem = zipf_problem(zipf_data(100.0, 0.5, 50));
        let opts = SolverOptions {
            max_iterations: 1,
            restarts: 0,
            ..SolverOptions::default()
        };
        match nls_solve(&problem, [1.0, 3.0], &opts) {
            Err(Error::NonConvergence { best, .. }) => assert!(best[0].is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn stderr_trivial_cases() {
        let jac = vec![[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]];
        assert_eq!(linearized_stderr(&jac, &[0.0, 0.0, 0.0]).unwrap(), (0.0, 0.0));
        // Orthonormal columns and RSS = n - 2 give unit covariance.
        let (dc, db) = linearized_stderr(&jac, &[0.0, 0.0, 1.0]).unwrap();
        assert!((dc - 1.0).abs() < 1e-15 && (db - 1.0).abs() < 1e-15);
    }

    #[test]
    fn stderr_singular() {
        let jac = vec![[1.0, 2.0], [2.0, 4.0], [3.0, 6.0]];
        assert!(matches!(
            linearized_stderr(&jac, &[1.0, 1.0, 1.0]),
            Err(Error::Singular)
        ));
    }

    #[test]
    fn stderr_single_column() {
        let se = linearized_stderr_single(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!((se - 1.0).abs() < 1e-15);
    }
}
