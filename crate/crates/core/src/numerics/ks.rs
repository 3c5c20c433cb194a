use crate::error::{Error, Result};

/// Kolmogorov–Smirnov distance between the empirical CDF of `sorted_values`
/// (ascending) and `model_cdf`.
///
/// The empirical CDF is right-continuous, so both one-sided gaps are checked at
/// every sample point.
pub fn ks_statistic<F>(sorted_values: &[f64], model_cdf: F) -> Result<f64>
where
    F: Fn(f64) -> f64,
{
    if sorted_values.is_empty() {
        return Err(Error::InsufficientData {
            what: "KS statistic sample",
            needed: 1,
            got: 0,
        });
    }
    let n = sorted_values.len() as f64;
    let mut worst = 0.0f64;
    for (i, &x) in sorted_values.iter().enumerate() {
        let f = model_cdf(x);
        let above = (i + 1) as f64 / n - f;
        let below = f - i as f64 / n;
        worst = worst.max(above).max(below);
    }
    Ok(worst.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Every jump of the empirical step function, checked on both sides.
    fn brute_force(values: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
        let n = values.len() as f64;
        let mut gaps = Vec::new();
        for &x in values {
            let at = values.iter().filter(|&&v| v <= x).count() as f64 / n;
            let before = values.iter().filter(|&&v| v < x).count() as f64 / n;
            gaps.push((at - cdf(x)).abs());
            gaps.push((before - cdf(x)).abs());
        }
        gaps.into_iter().fold(0.0, f64::max)
    }

    #[test]
    fn uniform_model_on_four_points() {
        let data = [1.0, 2.0, 3.0, 4.0];
        let cdf = |x: f64| (x / 5.0).clamp(0.0, 1.0);
        let d = ks_statistic(&data, cdf).unwrap();
        let oracle = brute_force(&data, cdf);
        assert!((d - oracle).abs() < 1e-15);
        assert!((d - 0.2).abs() < 1e-12, "{d}");
    }

    #[test]
    fn single_point_at_median() {
        let d = ks_statistic(&[0.0], |x| if x >= 0.0 { 0.5 } else { 0.0 }).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
    }

    #[test]
    fn exact_quantiles() {
        let n = 200;
        let data: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let d = ks_statistic(&data, |x| x).unwrap();
        assert!(d <= 0.5 / n as f64 + 1e-12);
    }

    #[test]
    fn empty() {
        assert!(ks_statistic(&[], |x| x).is_err());
    }
}
