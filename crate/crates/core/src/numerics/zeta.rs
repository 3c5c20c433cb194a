//! Partial sums of `i^-beta` extended to real upper limits, their derivative in
//! `beta`, and Hurwitz zeta tails.
//!
//! The partial sum `S(beta, x) = zeta(beta) - zeta(beta, x + 1)` is evaluated as
//! one fused quantity: a direct head sum plus an Euler–Maclaurin span between
//! two large arguments. Neither `zeta(beta)` nor `zeta(beta, x + 1)` is ever
//! formed on its own, so the same code path works for `beta < 1`, where both
//! pieces only exist as analytic continuations.

use crate::error::{Error, Result};

/// Number of leading terms summed directly before the asymptotic expansion.
pub const HEAD_TERMS: u64 = 10_000;

/// Hurwitz tails with a smaller argument are shifted past this point first.
const TAIL_SHIFT: f64 = 1_000.0;

const POLE_TOLERANCE: f64 = 1e-12;

fn check_beta(beta: f64) -> Result<()> {
    if beta.is_finite() && beta > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("beta must be positive and finite, got {beta}")))
    }
}

fn check_upper(x: f64) -> Result<()> {
    if x.is_nan() || x < 1.0 {
        Err(Error::Domain(format!("upper limit must be >= 1, got {x}")))
    } else {
        Ok(())
    }
}

fn check_pole(beta: f64) -> Result<()> {
    if (beta - 1.0).abs() < POLE_TOLERANCE {
        Err(Error::HarmonicPole { beta })
    } else {
        Ok(())
    }
}

/// `sum_{i=1..x} i^-beta`, extended to real `x >= 1` (and `x = +inf` for `beta > 1`).
///
/// Integer `x` up to [`HEAD_TERMS`] is a plain sum. Anything else goes through
/// the continued form, which is singular at `beta = 1`; that case is rejected
/// with [`Error::HarmonicPole`].
pub fn zipf_mass(beta: f64, x: f64) -> Result<f64> {
    check_beta(beta)?;
    check_upper(x)?;
    zipf_mass_continued(beta, x)
}

/// Same as [`zipf_mass`] but accepts any `x > 0`, which the threshold
/// estimators need when probing thresholds above the intercept.
pub(crate) fn zipf_mass_continued(beta: f64, x: f64) -> Result<f64> {
    if x.is_infinite() {
        if beta <= 1.0 {
            return Err(Error::Domain(format!("sum of i^-{beta} diverges")));
        }
        return Ok(head_sum(beta, HEAD_TERMS) + hurwitz_tail(beta, (HEAD_TERMS + 1) as f64)?);
    }
    if x.fract() == 0.0 && x <= HEAD_TERMS as f64 {
        return Ok(head_sum(beta, x as u64));
    }
    check_pole(beta)?;
    let head_end = (HEAD_TERMS + 1) as f64;
    if x >= HEAD_TERMS as f64 {
        Ok(head_sum(beta, HEAD_TERMS) + em_span(beta, head_end, x + 1.0))
    } else {
        // zeta(b, x+1) = sum_{k<m} (x+1+k)^-b + zeta(b, x+1+m), with x+1+m past the head.
        let m = (HEAD_TERMS as f64 - x).ceil() as u64;
        let shifted = shifted_sum(beta, x + 1.0, m);
        Ok(head_sum(beta, HEAD_TERMS) - shifted + em_span(beta, head_end, x + 1.0 + m as f64))
    }
}

/// `d/d beta` of [`zipf_mass`], i.e. `-sum_{i=1..x} ln(i) i^-beta` extended to real `x`.
pub fn zipf_mass_dbeta(beta: f64, x: f64) -> Result<f64> {
    check_beta(beta)?;
    check_upper(x)?;
    zipf_mass_dbeta_continued(beta, x)
}

pub(crate) fn zipf_mass_dbeta_continued(beta: f64, x: f64) -> Result<f64> {
    if x.is_infinite() {
        return Err(Error::Domain("derivative at an infinite upper limit".into()));
    }
    if x.fract() == 0.0 && x <= HEAD_TERMS as f64 {
        return Ok(head_dsum(beta, x as u64));
    }
    check_pole(beta)?;
    let head_end = (HEAD_TERMS + 1) as f64;
    if x >= HEAD_TERMS as f64 {
        Ok(head_dsum(beta, HEAD_TERMS) + em_span_dbeta(beta, head_end, x + 1.0))
    } else {
        let m = (HEAD_TERMS as f64 - x).ceil() as u64;
        let shifted = shifted_dsum(beta, x + 1.0, m);
        Ok(head_dsum(beta, HEAD_TERMS) - shifted
            + em_span_dbeta(beta, head_end, x + 1.0 + m as f64))
    }
}

/// Hurwitz zeta `sum_{k>=0} (a + k)^-s` for `s > 1`, `a > 0`.
pub fn hurwitz_tail(s: f64, a: f64) -> Result<f64> {
    if !(s > 1.0) || !s.is_finite() {
        return Err(Error::Domain(format!("Hurwitz tail needs s > 1, got {s}")));
    }
    if !(a > 0.0) || !a.is_finite() {
        return Err(Error::Domain(format!("Hurwitz tail needs a > 0, got {a}")));
    }
    let (direct, start) = if a < TAIL_SHIFT {
        let m = (TAIL_SHIFT - a).ceil() as u64;
        (shifted_sum(s, a, m), a + m as f64)
    } else {
        (0.0, a)
    };
    Ok(direct + start.powf(1.0 - s) / (s - 1.0) + em_correction(s, start))
}

/// `sum_{i=1..n} i^-beta`, smallest terms first.
fn head_sum(beta: f64, n: u64) -> f64 {
    (1..=n).rev().map(|i| (i as f64).powf(-beta)).sum()
}

fn head_dsum(beta: f64, n: u64) -> f64 {
    -(2..=n)
        .rev()
        .map(|i| {
            let t = i as f64;
            t.ln() * t.powf(-beta)
        })
        .sum::<f64>()
}

/// `sum_{k<m} (a + k)^-s`
fn shifted_sum(s: f64, a: f64, m: u64) -> f64 {
    (0..m).rev().map(|k| (a + k as f64).powf(-s)).sum()
}

fn shifted_dsum(s: f64, a: f64, m: u64) -> f64 {
    -(0..m)
        .rev()
        .map(|k| {
            let t = a + k as f64;
            t.ln() * t.powf(-s)
        })
        .sum::<f64>()
}

/// Euler–Maclaurin terms past the integral: half term plus the B2 and B4 corrections.
fn em_correction(s: f64, t: f64) -> f64 {
    let p = t.powf(-s);
    p / 2.0 + s * p / t / 12.0 - s * (s + 1.0) * (s + 2.0) * p / (t * t * t) / 720.0
}

fn em_correction_ds(s: f64, t: f64) -> f64 {
    let l = t.ln();
    let p = t.powf(-s);
    -l * p / 2.0 + p / t * (1.0 - s * l) / 12.0
        - p / (t * t * t) * ((3.0 * s * s + 6.0 * s + 2.0) - s * (s + 1.0) * (s + 2.0) * l) / 720.0
}

/// `zeta(s, a) - zeta(s, b)` for large `a`, `b` (the sum of `t^-s` for `t = a, a+1, ..` below `b`).
fn em_span(s: f64, a: f64, b: f64) -> f64 {
    power_integral(1.0 - s, a.ln(), b.ln()) + em_correction(s, a) - em_correction(s, b)
}

fn em_span_dbeta(s: f64, a: f64, b: f64) -> f64 {
    -log_power_integral(1.0 - s, a.ln(), b.ln()) + em_correction_ds(s, a) - em_correction_ds(s, b)
}

/// `int_{y0}^{y1} e^{u y} dy`, stable as `u -> 0`.
fn power_integral(u: f64, y0: f64, y1: f64) -> f64 {
    if u == 0.0 {
        return y1 - y0;
    }
    (u * y0).exp() * (u * (y1 - y0)).exp_m1() / u
}

/// `int_{y0}^{y1} y e^{u y} dy`, by power series when `u y` is small.
fn log_power_integral(u: f64, y0: f64, y1: f64) -> f64 {
    let reach = u.abs() * y0.abs().max(y1.abs());
    if reach < 0.5 {
        let mut total = 0.0;
        let mut coeff = 1.0; // u^k / k!
        let (mut p0, mut p1) = (y0 * y0, y1 * y1); // y^{k+2}
        for k in 0..60 {
            let term = coeff * (p1 - p0) / (k as f64 + 2.0);
            total += term;
            if term.abs() <= 1e-18 * total.abs() {
                break;
            }
            coeff *= u / (k as f64 + 1.0);
            p0 *= y0;
            p1 *= y1;
        }
        total
    } else {
        let antiderivative = |y: f64| (u * y).exp() * (u * y - 1.0) / (u * u);
        antiderivative(y1) - antiderivative(y0)
    }
}
