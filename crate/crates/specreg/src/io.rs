//! Headerless CSV matrices and vectors.
//!
//! Values are written with Rust's shortest round-trip formatting, so a
//! write followed by a read reproduces every bit.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn parse_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Parse {
        path: display(path),
        message: message.into(),
    }
}

/// Read a rectangular numeric CSV without a header row.
pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    let file = File::open(path).map_err(|source| Error::Io {
        path: display(path),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows: Vec<Vec<f64>> = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e.to_string()))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(col, field)| {
                field.parse::<f64>().map_err(|_| {
                    parse_err(path, format!("row {}, column {}: not a number: {field:?}", line + 1, col + 1))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    format!("row {} has {} columns, expected {}", line + 1, row.len(), first.len()),
                ));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() || rows[0].is_empty() {
        return Err(parse_err(path, "no data"));
    }
    let (n, p) = (rows.len(), rows[0].len());
    Ok(DMatrix::from_fn(n, p, |i, j| rows[i][j]))
}

/// Read a vector stored as one column or as one row.
pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    let m = read_matrix(path)?;
    match m.shape() {
        (_, 1) => Ok(m.column(0).into_owned()),
        (1, _) => Ok(m.row(0).transpose()),
        (n, p) => Err(parse_err(path, format!("expected a vector, found a {n}×{p} matrix"))),
    }
}

pub fn matrix_to_csv(m: &DMatrix<f64>) -> String {
    let mut out = String::new();
    for row in m.row_iter() {
        let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut file = File::create(path).map_err(|source| Error::Io {
        path: display(path),
        source,
    })?;
    file.write_all(text.as_bytes()).map_err(|source| Error::Io {
        path: display(path),
        source,
    })
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(m))
}

/// One value per line.
pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    write_text(path, &matrix_to_csv(&DMatrix::from_column_slice(v.len(), 1, v.as_slice())))
}

/// Parse a JSON file into `T`.
pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: display(path),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| parse_err(path, e.to_string()))
}
