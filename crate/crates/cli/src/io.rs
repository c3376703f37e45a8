//! CSV/JSON artifact readers and writers. Floats are written with Rust's shortest
//! round-trip formatting, so re-reading an artifact reproduces the values exactly.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

pub type IoResult<T> = Result<T, Box<dyn std::error::Error + Send + Sync>>;

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> IoResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> IoResult<T> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

/// One JSON document per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> IoResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for r in rows {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_table(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<f64>>) -> IoResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(row.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Header and numeric rows of a CSV file.
pub fn read_table(path: &Path) -> IoResult<(Vec<String>, Vec<Vec<f64>>)> {
    let mut r = csv::Reader::from_path(path)?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let row = rec
            .iter()
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| format!("{}: {e}", path.display()))?;
        if row.len() != header.len() {
            return Err(format!("{}: ragged row", path.display()).into());
        }
        rows.push(row);
    }
    Ok((header, rows))
}

/// Sample matrix with named columns plus an optional trailing `loglike` column.
pub fn write_samples(path: &Path, names: &[String], samples: &DMatrix<f64>, loglikes: Option<&[f64]>) -> IoResult<()> {
    let mut header = names.to_vec();
    if loglikes.is_some() {
        header.push("loglike".into());
    }
    let rows = (0..samples.nrows()).map(|r| {
        let mut row: Vec<f64> = samples.row(r).iter().copied().collect();
        if let Some(ll) = loglikes {
            row.push(ll[r]);
        }
        row
    });
    write_table(path, &header, rows)
}

/// Inverse of [`write_samples`]: the named columns (in `names` order) and the
/// `loglike` column if present.
pub fn read_samples(path: &Path, names: &[String]) -> IoResult<(DMatrix<f64>, Option<Vec<f64>>)> {
    let (header, rows) = read_table(path)?;
    let cols = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h == n)
                .ok_or_else(|| format!("{}: missing column `{n}`", path.display()))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let m = DMatrix::from_fn(rows.len(), cols.len(), |r, c| rows[r][cols[c]]);
    let ll = header
        .iter()
        .position(|h| h == "loglike")
        .map(|j| rows.iter().map(|r| r[j]).collect());
    Ok((m, ll))
}

pub fn write_dataset(path: &Path, x: &[f64], y: &[f64]) -> IoResult<()> {
    let rows = x.iter().zip(y).map(|(a, b)| vec![*a, *b]);
    write_table(path, &["x".into(), "y".into()], rows)
}

pub fn read_dataset(path: &Path) -> IoResult<(Vec<f64>, Vec<f64>)> {
    let (header, rows) = read_table(path)?;
    let ix = header.iter().position(|h| h == "x").ok_or("dataset csv needs an `x` column")?;
    let iy = header.iter().position(|h| h == "y").ok_or("dataset csv needs a `y` column")?;
    Ok((rows.iter().map(|r| r[ix]).collect(), rows.iter().map(|r| r[iy]).collect()))
}
