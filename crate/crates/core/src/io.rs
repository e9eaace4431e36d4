//! CSV and JSON file helpers.
//!
//! Matrices are written one sample per row under a header `{prefix}0..`.
//! Floats use Rust's shortest round-trip formatting, so a write followed by
//! a read is lossless.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};

pub fn write_matrix_csv(path: &Path, prefix: &str, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    let header: Vec<String> = (0..m.ncols()).map(|j| format!("{prefix}{j}")).collect();
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(m.ncols());
    for i in 0..m.nrows() {
        row.clear();
        row.extend((0..m.ncols()).map(|j| m[(i, j)].to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV with a header row. Returns the header and the data.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut r = csv::Reader::from_reader(BufReader::new(File::open(path)?));
    let header: Vec<String> = r.headers()?.iter().map(str::to_owned).collect();
    let ncols = header.len();
    let mut values = Vec::new();
    let mut nrows = 0;
    for rec in r.records() {
        let rec = rec?;
        if rec.len() != ncols {
            return Err(Error::ShapeMismatch(format!(
                "{}: row {} has {} fields, header has {ncols}",
                path.display(),
                nrows + 1,
                rec.len()
            )));
        }
        for field in rec.iter() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::InvalidConfig(format!("{}: not a number: {field:?}", path.display()))
            })?;
            values.push(v);
        }
        nrows += 1;
    }
    Ok((header, DMatrix::from_row_slice(nrows, ncols, &values)))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    f.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let f = BufReader::new(File::open(path)?);
    Ok(serde_json::from_reader(f)?)
}
