use std::io::{Read, Write};

use super::ScatterRecord;
use crate::error::{Error, Result};

/// Writes `rank,volume` rows, rank starting at 1, in the given order.
pub fn write_rank_distribution<W: Write>(volumes: &[f64], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "volume"])?;
    for (i, v) in volumes.iter().enumerate() {
        w.write_record([(i + 1).to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a `rank,volume` file back into volumes ordered by rank.
pub fn read_rank_distribution<R: Read>(input: R) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    if headers.iter().map(str::trim).collect::<Vec<_>>() != ["rank", "volume"] {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header rank,volume, got {:?}", headers.as_slice()),
        });
    }
    let mut rows = Vec::new();
    for record in r.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |what: &str| Error::Parse {
            line,
            message: format!("bad {what} in {:?}", record.as_slice()),
        };
        let rank: u64 = record.get(0).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("rank"))?;
        let volume: f64 = record.get(1).and_then(|s| s.trim().parse().ok()).ok_or_else(|| bad("volume"))?;
        rows.push((rank, volume));
    }
    rows.sort_by_key(|r| r.0);
    Ok(rows.into_iter().map(|r| r.1).collect())
}

/// Writes scatter records with a header row.
pub fn write_scatter_csv<W: Write>(records: &[ScatterRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "scheme",
        "sample_size",
        "method",
        "replicate",
        "empirical_volume",
        "estimated_volume",
        "includes_rank1",
    ])?;
    for r in records {
        w.write_record([
            r.scheme.to_string(),
            r.sample_size.to_string(),
            r.method.to_string(),
            r.replicate.to_string(),
            r.empirical_volume.to_string(),
            r.estimated_volume.to_string(),
            r.includes_rank1.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn five_rows_with_header() {
        let pop = [100.0, 50.0, 100.0 / 3.0, 25.0, 20.0];
        let mut buf = Vec::new();
        write_rank_distribution(&pop, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("rank,volume\n1,100\n"));
        assert_eq!(text.lines().count(), 6);
        assert_eq!(read_rank_distribution(buf.as_slice()).unwrap(), pop.to_vec());
    }

    #[test]
    fn bad_files() {
        assert!(read_rank_distribution("r,v\n1,2\n".as_bytes()).is_err());
        match read_rank_distribution("rank,volume\n1,2\n2,x\n".as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }
}
