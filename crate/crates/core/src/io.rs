//! Reading observed volumes from CSV.
//!
//! Continuous files have the header `query,volume`; binned files have
//! `query,reported_volume`, where each value is the upper edge of its bin.

use std::collections::HashSet;
use std::fs::File;
use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::sampling::{infer_binning, BinnedSample, ContinuousSample};

fn read_pairs<R: Read>(input: R, value_column: &str) -> Result<Vec<f64>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "query" || &headers[1] != value_column {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header query,{value_column}, got {:?}", headers.as_slice()),
        });
    }
    let mut seen = HashSet::new();
    let mut values = Vec::new();
    let mut record = csv::StringRecord::new();
    loop {
        let more = reader.read_record(&mut record).map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
        if !more {
            break;
        }
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let query = record[0].to_string();
        let value: f64 = record[1].parse().map_err(|_| Error::Parse {
            line,
            message: format!("{value_column} {:?} is not a number", &record[1]),
        })?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(Error::Parse {
                line,
                message: format!("{value_column} must be positive, got {value}"),
            });
        }
        if !seen.insert(query.clone()) {
            return Err(Error::DuplicateQuery { line, query });
        }
        values.push(value);
    }
    Ok(values)
}

/// Parses a `query,volume` CSV into a descending sample.
pub fn read_continuous<R: Read>(input: R) -> Result<ContinuousSample> {
    ContinuousSample::new(read_pairs(input, "volume")?)
}

/// Parses a `query,reported_volume` CSV, inferring the bin ladder from the values.
pub fn read_binned<R: Read>(input: R) -> Result<BinnedSample> {
    let values = read_pairs(input, "reported_volume")?;
    let scheme = infer_binning(&values)?;
    BinnedSample::from_reported(scheme, &values)
}

pub fn ingest_continuous(path: impl AsRef<Path>) -> Result<ContinuousSample> {
    read_continuous(File::open(path)?)
}

pub fn ingest_binned(path: impl AsRef<Path>) -> Result<BinnedSample> {
    read_binned(File::open(path)?)
}
