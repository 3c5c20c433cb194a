use serde::{Deserialize, Serialize};

use super::ContinuousSample;
use crate::error::{Error, Result};

/// Ratio between consecutive reported volumes on the public keyword-tool ladder.
pub const SEARCHVOLUME_RATIO: f64 = 1.2324;

/// Geometric bins `[l_{j-1}, l_j)` with `l_j = l_1 * delta^(j-1)`, `j = 1..=M`.
///
/// Bin 1 starts at the floor `l_0`; the top bin is closed at `l_M`, and any
/// volume at or above `l_{M-1}` lands in it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinningScheme {
    pub floor: f64,
    pub first_edge: f64,
    pub ratio: f64,
    pub bin_count: usize,
}

impl BinningScheme {
    pub fn new(floor: f64, first_edge: f64, ratio: f64, bin_count: usize) -> Result<Self> {
        let scheme = BinningScheme {
            floor,
            first_edge,
            ratio,
            bin_count,
        };
        scheme.validate()?;
        Ok(scheme)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) || !(self.first_edge > self.floor) || !self.first_edge.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bin edges need 0 < l0 < l1, got l0 = {}, l1 = {}",
                self.floor, self.first_edge
            )));
        }
        if !(self.ratio > 1.0) || !self.ratio.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bin ratio must exceed 1, got {}",
                self.ratio
            )));
        }
        if self.bin_count == 0 {
            return Err(Error::InvalidParameter("a binning needs at least one bin".into()));
        }
        Ok(())
    }

    /// Ladder starting at `l_1 = floor * ratio` with enough bins that
    /// `max_value < l_M`.
    pub fn covering(floor: f64, ratio: f64, max_value: f64) -> Result<Self> {
        let probe = BinningScheme::new(floor, floor * ratio, ratio, 1)?;
        if !(max_value >= floor) || !max_value.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "max value {max_value} must be finite and at least the floor {floor}"
            )));
        }
        let mut m = 1;
        while probe.edge(m) <= max_value {
            m += 1;
        }
        Ok(BinningScheme {
            bin_count: m,
            ..probe
        })
    }

    /// `l_j`; `edge(0)` is the floor.
    pub fn edge(&self, j: usize) -> f64 {
        if j == 0 {
            self.floor
        } else {
            self.first_edge * self.ratio.powi(j as i32 - 1)
        }
    }

    /// Bin index `max(1, 2 + floor(log_delta(v / l_1)))`, clamped to `M`.
    pub fn bin_of(&self, v: f64) -> Result<usize> {
        if !(v >= self.floor) || v.is_nan() {
            return Err(Error::Domain(format!(
                "volume {v} lies below the bin floor {}",
                self.floor
            )));
        }
        if v < self.first_edge {
            return Ok(1);
        }
        let mut j = 2 + ((v / self.first_edge).ln() / self.ratio.ln()).floor().max(0.0) as usize;
        // The logarithm can land one rung off right at an edge.
        if j > 2 && v < self.edge(j - 1) {
            j -= 1;
        } else if v >= self.edge(j) {
            j += 1;
        }
        Ok(j.min(self.bin_count))
    }

    /// Rung `j` whose edge `l_j` is nearest to `value` in log scale.
    pub fn rung_of(&self, value: f64) -> Result<usize> {
        if !(value > 0.0) {
            return Err(Error::Domain(format!("reported value must be positive, got {value}")));
        }
        let j = 1.0 + ((value / self.first_edge).ln() / self.ratio.ln()).round();
        if j < 1.0 || j as usize > self.bin_count {
            return Err(Error::Domain(format!(
                "reported value {value} is off the ladder l_1 = {}, delta = {}, M = {}",
                self.first_edge, self.ratio, self.bin_count
            )));
        }
        Ok(j as usize)
    }
}

/// Per-bin counts `n_j`, index `j - 1`. Counts are real so that expected
/// counts can be fed back in as data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSample {
    pub scheme: BinningScheme,
    pub counts: Vec<f64>,
}

impl BinnedSample {
    pub fn new(scheme: BinningScheme, counts: Vec<f64>) -> Result<Self> {
        scheme.validate()?;
        if counts.len() != scheme.bin_count {
            return Err(Error::InvalidParameter(format!(
                "{} counts for {} bins",
                counts.len(),
                scheme.bin_count
            )));
        }
        if let Some(n) = counts.iter().find(|n| !(**n >= 0.0) || !n.is_finite()) {
            return Err(Error::InvalidParameter(format!("bin counts must be non-negative, got {n}")));
        }
        Ok(BinnedSample { scheme, counts })
    }

    /// Tallies reported upper bounds onto the ladder of `scheme`.
    pub fn from_reported(scheme: BinningScheme, reported: &[f64]) -> Result<Self> {
        scheme.validate()?;
        let mut counts = vec![0.0; scheme.bin_count];
        for &v in reported {
            counts[scheme.rung_of(v)? - 1] += 1.0;
        }
        Ok(BinnedSample { scheme, counts })
    }

    pub fn total(&self) -> f64 {
        self.counts.iter().sum()
    }

    pub fn non_empty_bins(&self) -> usize {
        self.counts.iter().filter(|n| **n > 0.0).count()
    }

    /// Each observation's reported volume `l_j`, descending.
    pub fn reported_values(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (j, &n) in self.counts.iter().enumerate().rev() {
            let edge = self.scheme.edge(j + 1);
            out.extend(std::iter::repeat_n(edge, n.round() as usize));
        }
        out
    }

    /// Largest reported volume, `l_j` of the highest non-empty bin.
    pub fn top_reported(&self) -> Option<f64> {
        self.counts
            .iter()
            .rposition(|n| *n > 0.0)
            .map(|j| self.scheme.edge(j + 1))
    }
}

/// Counts each volume into its bin of `scheme`.
pub fn bin_volumes(scheme: &BinningScheme, sample: &ContinuousSample) -> Result<BinnedSample> {
    scheme.validate()?;
    let mut counts = vec![0.0; scheme.bin_count];
    for &v in sample.volumes() {
        counts[scheme.bin_of(v)? - 1] += 1.0;
    }
    Ok(BinnedSample {
        scheme: *scheme,
        counts,
    })
}

/// Recovers a ladder from reported upper bounds.
///
/// The smallest log-ratio between successive distinct values is taken as one
/// rung; every other gap is rounded to a whole number of rungs, and `delta` is
/// the exponential of the median per-rung log-ratio. `l_1` is the smallest
/// value, `M` reaches the largest, and the floor is put one rung below `l_1`.
pub fn infer_binning(reported: &[f64]) -> Result<BinningScheme> {
    let mut distinct: Vec<f64> = reported.to_vec();
    if let Some(v) = distinct.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "reported values must be positive and finite, got {v}"
        )));
    }
    distinct.sort_by(f64::total_cmp);
    distinct.dedup_by(|a, b| (*a / *b - 1.0).abs() < 1e-12);
    if distinct.len() < 3 {
        return Err(Error::InsufficientData {
            what: "distinct reported values to infer a bin ladder",
            needed: 3,
            got: distinct.len(),
        });
    }
    let gaps: Vec<f64> = distinct.windows(2).map(|w| (w[1] / w[0]).ln()).collect();
    let unit = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    let mut per_rung: Vec<f64> = gaps.iter().map(|g| g / (g / unit).round().max(1.0)).collect();
    per_rung.sort_by(f64::total_cmp);
    let mid = per_rung.len() / 2;
    let log_ratio = if per_rung.len() % 2 == 1 {
        per_rung[mid]
    } else {
        0.5 * (per_rung[mid - 1] + per_rung[mid])
    };
    let ratio = log_ratio.exp();
    let first = distinct[0];
    let last = *distinct.last().expect("at least three values");
    let bin_count = 1 + ((last / first).ln() / log_ratio).round() as usize;
    BinningScheme::new(first / ratio, first, ratio, bin_count)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doubling() -> BinningScheme {
        BinningScheme::new(1.0, 10.0, 2.0, 10).unwrap()
    }

    #[test]
    fn bin_of_examples() {
        let s = doubling();
        assert_eq!(s.bin_of(5.0).unwrap(), 1);
        assert_eq!(s.bin_of(1.0).unwrap(), 1);
        assert_eq!(s.bin_of(10.0).unwrap(), 2);
        assert_eq!(s.bin_of(39.9).unwrap(), 3);
        assert_eq!(s.bin_of(1e9).unwrap(), 10);
        assert!(s.bin_of(0.5).is_err());
    }

    #[test]
    fn bin_of_agrees_with_edge_scan() {
        let s = BinningScheme::new(1.0, 1.2324, SEARCHVOLUME_RATIO, 60).unwrap();
        let scan = |v: f64| (1..=s.bin_count).find(|&j| v < s.edge(j)).unwrap_or(s.bin_count);
        for k in 0..5000 {
            let v = 1.0 + k as f64 * 0.37;
            assert_eq!(s.bin_of(v).unwrap(), scan(v), "{v}");
        }
        for j in 1..s.bin_count {
            let e = s.edge(j);
            assert_eq!(s.bin_of(e - e * 1e-9).unwrap(), j);
            assert_eq!(s.bin_of(e).unwrap(), j + 1);
        }
    }

    #[test]
    fn edges_hand_enumerated() {
        let s = BinningScheme::new(1.0, 10.0, 2.0, 4).unwrap();
        let eps = 1e-9;
        let sample =
            ContinuousSample::new(vec![10.0, 20.0 - eps, 20.0, 40.0 - eps, 40.0, 80.0 - eps, 2.0])
                .unwrap();
        let binned = bin_volumes(&s, &sample).unwrap();
        assert_eq!(binned.counts, vec![1.0, 2.0, 2.0, 2.0]);
        assert_eq!(binned.total(), 7.0);
    }

    #[test]
    fn small_volumes_fill_bin_one() {
        let s = doubling();
        let sample = ContinuousSample::new(vec![1.0, 3.0, 9.99]).unwrap();
        let b = bin_volumes(&s, &sample).unwrap();
        assert_eq!(b.counts[0], 3.0);
        assert_eq!(b.reported_values(), vec![10.0; 3]);
    }

    #[test]
    fn covering_reaches_past_max() {
        let s = BinningScheme::covering(2.0, 2.0, 100.0).unwrap();
        assert_eq!(s.first_edge, 4.0);
        assert!(s.edge(s.bin_count) > 100.0 && s.edge(s.bin_count - 1) <= 100.0);
    }

    #[test]
    fn infer_simple_ladder() {
        let s = infer_binning(&[10.0, 20.0, 40.0, 80.0, 20.0]).unwrap();
        assert!((s.ratio - 2.0).abs() < 1e-12);
        assert_eq!(s.first_edge, 10.0);
        assert_eq!(s.bin_count, 4);
    }

    #[test]
    fn infer_ladder_with_missing_rung() {
        let s = infer_binning(&[10.0, 20.0, 80.0]).unwrap();
        assert!((s.ratio - 2.0).abs() < 1e-12);
        assert_eq!(s.bin_count, 4);
    }

    #[test]
    fn infer_round_trip() {
        let truth = BinningScheme::new(10.0 / SEARCHVOLUME_RATIO, 10.0, SEARCHVOLUME_RATIO, 40).unwrap();
        let values: Vec<f64> = (1..=40).map(|j| truth.edge(j)).collect();
        let s = infer_binning(&values).unwrap();
        assert!((s.ratio - SEARCHVOLUME_RATIO).abs() < 1e-6);
        assert_eq!(s.bin_count, 40);
        let b = BinnedSample::from_reported(s, &values).unwrap();
        assert!(b.counts.iter().all(|n| *n == 1.0));
    }

    #[test]
    fn infer_needs_three_values() {
        assert!(matches!(
            infer_binning(&[10.0, 20.0, 10.0]),
            Err(Error::InsufficientData { got: 2, .. })
        ));
    }

    #[test]
    fn invalid_schemes() {
        assert!(BinningScheme::new(1.0, 1.0, 2.0, 3).is_err());
        assert!(BinningScheme::new(1.0, 2.0, 1.0, 3).is_err());
        assert!(BinningScheme::new(1.0, 2.0, 2.0, 0).is_err());
        assert!(BinnedSample::new(doubling(), vec![1.0; 3]).is_err());
    }
}
