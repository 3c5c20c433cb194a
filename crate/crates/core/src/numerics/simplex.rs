//! Nelder–Mead over two parameters.

use super::SolverOptions;
use crate::error::{Error, Result};

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Derivative-free minimization of `objective` from `init`.
///
/// A run stops when the simplex diameter is within `relative_tolerance` of the
/// best vertex's scale. Each converged run is restarted from a fresh simplex around its
/// best point (up to `restarts` times) until a restart no longer improves it.
pub fn simplex_minimize<F>(mut objective: F, init: [f64; 2], opts: &SolverOptions) -> Result<[f64; 2]>
where
    F: FnMut([f64; 2]) -> f64,
{
    opts.validate()?;
    let mut eval = |p: [f64; 2]| -> Result<f64> {
        let v = objective(p);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFiniteObjective { params: p.to_vec() })
        }
    };

    let mut best = init;
    let mut best_value = eval(init)?;
    let mut budget = opts.max_iterations.saturating_mul(opts.restarts + 1).max(opts.max_iterations);
    for _ in 0..=opts.restarts {
        let (point, value, used) = run(&mut eval, best, best_value, opts, budget)?;
        budget = budget.saturating_sub(used);
        let improved = best_value - value > opts.relative_tolerance * best_value.abs().max(1e-300);
        if value <= best_value {
            best = point;
            best_value = value;
        }
        if !improved || budget == 0 {
            break;
        }
    }
    Ok(best)
}

type Vertex = ([f64; 2], f64);

fn run<E>(
    eval: &mut E,
    start: [f64; 2],
    start_value: f64,
    opts: &SolverOptions,
    budget: usize,
) -> Result<([f64; 2], f64, usize)>
where
    E: FnMut([f64; 2]) -> Result<f64>,
{
    let tol = opts.relative_tolerance;
    let mut simplex: Vec<Vertex> = vec![(start, start_value)];
    for k in 0..2 {
        let mut p = start;
        p[k] += if start[k] != 0.0 {
            opts.step_scale * start[k]
        } else {
            opts.step_scale * 2.5e-3
        };
        simplex.push((p, eval(p)?));
    }

    let mut iterations = 0;
    while iterations < budget {
        // Stable sort keeps the incumbent first on ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (b, w) = (simplex[0], simplex[2]);
        let scale = b.0[0].abs().max(b.0[1].abs()).max(1.0);
        let diameter = simplex[1..]
            .iter()
            .map(|v| (v.0[0] - b.0[0]).abs().max((v.0[1] - b.0[1]).abs()))
            .fold(0.0, f64::max);
        if iterations == 0 && w.1 == b.1 {
            // Flat objective around the start.
            return Ok((b.0, b.1, 0));
        }
        if diameter <= tol * scale {
            break;
        }
        iterations += 1;

        let centroid = [(b.0[0] + simplex[1].0[0]) / 2.0, (b.0[1] + simplex[1].0[1]) / 2.0];
        let along = |t: f64| {
            [
                centroid[0] + t * (w.0[0] - centroid[0]),
                centroid[1] + t * (w.0[1] - centroid[1]),
            ]
        };
        let reflected = along(-REFLECT);
        let fr = eval(reflected)?;
        if fr < b.1 {
            let expanded = along(-EXPAND);
            let fe = eval(expanded)?;
            simplex[2] = if fe < fr { (expanded, fe) } else { (reflected, fr) };
            continue;
        }
        if fr < simplex[1].1 {
            simplex[2] = (reflected, fr);
            continue;
        }
        let (contracted, fc) = if fr < w.1 {
            let p = along(-CONTRACT);
            (p, eval(p)?)
        } else {
            let p = along(CONTRACT);
            (p, eval(p)?)
        };
        if fc < w.1.min(fr) {
            simplex[2] = (contracted, fc);
            continue;
        }
        for v in simplex.iter_mut().skip(1) {
            let p = [
                b.0[0] + SHRINK * (v.0[0] - b.0[0]),
                b.0[1] + SHRINK * (v.0[1] - b.0[1]),
            ];
            *v = (p, eval(p)?);
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    Ok((simplex[0].0, simplex[0].1, iterations))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_bowl() {
        let p = simplex_minimize(
            |p| (p[0] - 1.0).powi(2) + (p[1] + 2.0).powi(2),
            [0.0, 0.0],
            &SolverOptions::default(),
        )
        .unwrap();
        assert!((p[0] - 1.0).abs() < 1e-6 && (p[1] + 2.0).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn rosenbrock_valley() {
        let opts = SolverOptions {
            max_iterations: 5_000,
            ..SolverOptions::default()
        };
        let p = simplex_minimize(
            |p| 100.0 * (p[1] - p[0] * p[0]).powi(2) + (1.0 - p[0]).powi(2),
            [-1.2, 1.0],
            &opts,
        )
        .unwrap();
        assert!((p[0] - 1.0).abs() < 1e-5 && (p[1] - 1.0).abs() < 1e-5, "{p:?}");
    }

    #[test]
    fn constant_objective_returns_init() {
        let p = simplex_minimize(|_| 3.0, [0.7, -4.0], &SolverOptions::default()).unwrap();
        assert_eq!(p, [0.7, -4.0]);
    }

    #[test]
    fn non_finite_objective_names_params() {
        let err = simplex_minimize(
            |p| if p[0] > 0.5 { f64::NAN } else { (p[0] - 1.0).powi(2) },
            [0.0, 1.0],
            &SolverOptions::default(),
        );
        match err {
            Err(Error::NonFiniteObjective { params }) => assert!(params[0] > 0.5),
            other => panic!("{other:?}"),
        }
    }
}
