//! Threshold tables: how many queries are searched at least `v` times a year,
//! how much volume they carry, and the propagated errors.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::ZipfParams;
use crate::uncertainty::{estimate_population, ParamErrors, Propagation};

/// Yearly thresholds of one, ten, ... searches a month, up to 50,000.
pub const DEFAULT_THRESHOLDS: [f64; 6] = [12.0, 120.0, 1_200.0, 12_000.0, 120_000.0, 600_000.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub threshold_v: f64,
    /// `v / 12`, the monthly average.
    pub threshold_v_monthly: f64,
    pub n_hat: f64,
    pub delta_n: f64,
    pub v_hat: f64,
    pub delta_v: f64,
}

/// One row per threshold, with errors combined as absolute sums.
pub fn report_table(params: ZipfParams, errs: ParamErrors, thresholds: &[f64]) -> Result<Vec<ReportRow>> {
    report_table_with(params, errs, thresholds, Propagation::Absolute)
}

pub fn report_table_with(
    params: ZipfParams,
    errs: ParamErrors,
    thresholds: &[f64],
    how: Propagation,
) -> Result<Vec<ReportRow>> {
    thresholds
        .iter()
        .map(|&v| {
            let e = estimate_population(params, errs, v, how)?;
            Ok(ReportRow {
                threshold_v: v,
                threshold_v_monthly: v / 12.0,
                n_hat: e.n_hat,
                delta_n: e.delta_n,
                v_hat: e.v_hat,
                delta_v: e.delta_v,
            })
        })
        .collect()
}

/// Integer with thousands separators, e.g. `269,214,520`.
pub fn group_thousands(x: f64) -> String {
    let digits = format!("{:.0}", x.abs());
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(ch);
    }
    if x < 0.0 && digits.chars().any(|c| c != '0') {
        out.insert(0, '-');
    }
    out
}

/// Millions with two decimals and separators, e.g. `14,169.58 M`.
pub fn millions(x: f64) -> String {
    let m = x / 1e6;
    let whole = m.trunc();
    let cents = ((m - whole).abs() * 100.0).round();
    let (whole, cents) = if cents >= 100.0 {
        (whole + m.signum(), 0.0)
    } else {
        (whole, cents)
    };
    format!("{}.{:02} M", group_thousands(whole), cents as u64)
}

/// Plain-text table: counts rounded to integers, volumes in millions.
pub fn format_table(rows: &[ReportRow]) -> String {
    let header = ["v", "v/12", "N_v", "dN_v", "V_v", "dV_v"];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                group_thousands(r.threshold_v),
                group_thousands(r.threshold_v_monthly),
                group_thousands(r.n_hat),
                format!("± {}", group_thousands(r.delta_n)),
                millions(r.v_hat),
                format!("± {}", millions(r.delta_v)),
            ]
        })
        .collect();
    let mut widths = header.map(|h| h.chars().count());
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.chars().count());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[&str]| {
        let padded: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(c, w)| format!("{c:>w$}", w = *w))
            .collect();
        let _ = writeln!(out, "{}", padded.join("  "));
    };
    line(&mut out, &header);
    for row in &cells {
        line(&mut out, &row.iter().map(String::as_str).collect::<Vec<_>>());
    }
    out
}
