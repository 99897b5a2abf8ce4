//! File formats: numeric CSV at 17 significant digits and pretty JSON.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::experiments::SummaryRow;
use crate::model::{InnovationSpec, TransitionMatrix, VarSample};
use crate::{Error, Result};

/// Scientific notation with 17 significant digits (exact round trip for f64).
pub fn format_f64(v: f64) -> String {
    if v == 0.0 {
        // keeps -0.0 and 0.0 distinct on the page
        return if v.is_sign_negative() { "-0".into() } else { "0".into() };
    }
    format!("{v:.16e}")
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    let (line, message) = match e.position() {
        Some(pos) => (pos.line() as usize, e.to_string()),
        None => (0, e.to_string()),
    };
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        _ => Error::Parse { line, column: 0, message },
    }
}

/// Writes a matrix with the given column names.
pub fn write_matrix_csv(path: &Path, header: &[String], m: &DMatrix<f64>) -> Result<()> {
    if header.len() != m.ncols() {
        return Err(Error::DimensionMismatch {
            context: "csv header",
            expected: m.ncols(),
            actual: header.len(),
        });
    }
    write_rows(path, header, m.row_iter().map(|r| r.iter().map(|v| format_f64(*v)).collect()))
}

/// Column names `x1..xp`.
pub fn coordinate_header(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("x{j}")).collect()
}

/// Reads a numeric CSV with a header row. Errors carry 1-based line and column.
pub fn read_matrix_csv(path: &Path) -> Result<(Vec<String>, DMatrix<f64>)> {
    let text = fs::read_to_string(path)?;
    parse_matrix_csv(&text)
}

pub fn parse_matrix_csv(text: &str) -> Result<(Vec<String>, DMatrix<f64>)> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().map_err(csv_err)?.iter().map(String::from).collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            line: 1,
            column: 1,
            message: "missing header row".into(),
        });
    }
    let mut values = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(csv_err)?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(rows + 2);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                column: record.len().min(header.len()) + 1,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        for (j, field) in record.iter().enumerate() {
            let v: f64 = field.parse().map_err(|_| Error::Parse {
                line,
                column: j + 1,
                message: format!("`{field}` in column `{}` is not a number", header[j]),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line,
                    column: j + 1,
                    message: format!("non-finite value in column `{}`", header[j]),
                });
            }
            values.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::Parse {
            line: 2,
            column: 1,
            message: "no data rows".into(),
        });
    }
    Ok((header.clone(), DMatrix::from_row_slice(rows, header.len(), &values)))
}

/// Sample CSV: header `t,x1..xp`, one row per time point `0..=n`.
pub fn write_sample_csv(path: &Path, sample: &VarSample) -> Result<()> {
    let mut header = vec!["t".to_string()];
    header.extend(coordinate_header(sample.p));
    write_rows(
        path,
        &header,
        sample.series.row_iter().enumerate().map(|(t, r)| {
            let mut row = vec![t.to_string()];
            row.extend(r.iter().map(|v| format_f64(*v)));
            row
        }),
    )
}

/// Reads a sample CSV; a leading `t` column is dropped.
pub fn read_sample_csv(path: &Path) -> Result<VarSample> {
    let (header, m) = read_matrix_csv(path)?;
    let series = if header[0] == "t" {
        if m.ncols() < 2 {
            return Err(Error::Parse {
                line: 1,
                column: 2,
                message: "sample needs at least one coordinate column".into(),
            });
        }
        m.columns(1, m.ncols() - 1).into_owned()
    } else {
        m
    };
    VarSample::from_series(series)
}

/// A square matrix as CSV with header `x1..xp`.
pub fn read_square_csv(path: &Path) -> Result<DMatrix<f64>> {
    let (_, m) = read_matrix_csv(path)?;
    if m.nrows() != m.ncols() {
        return Err(Error::NonSquare {
            rows: m.nrows(),
            cols: m.ncols(),
        });
    }
    Ok(m)
}

pub fn write_square_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    write_matrix_csv(path, &coordinate_header(m.ncols()), m)
}

pub fn write_qq_csv(path: &Path, pairs: &[(f64, f64)]) -> Result<()> {
    write_rows(
        path,
        &["stat_quantile".into(), "w_quantile".into()],
        pairs.iter().map(|(a, b)| vec![format_f64(*a), format_f64(*b)]),
    )
}

pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let header: Vec<String> = [
        "label",
        "design",
        "innovation",
        "n",
        "p",
        "replications",
        "alpha",
        "size",
        "coverage",
        "mean_critical_value",
        "ks_distance",
        "failures",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    write_rows(
        path,
        &header,
        rows.iter().map(|r| {
            vec![
                r.label.clone(),
                r.design.clone(),
                r.innovation.clone(),
                r.n.to_string(),
                r.p.to_string(),
                r.replications.to_string(),
                format_f64(r.alpha),
                format_f64(r.size),
                format_f64(r.coverage),
                format_f64(r.mean_critical_value),
                format_f64(r.ks_distance),
                r.failures.to_string(),
            ]
        }),
    )
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

/// Parses JSON, reporting line and column on failure.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    parse_json(&text)
}

pub fn parse_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Row-major matrix for JSON documents.
pub fn matrix_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    if r == 0 {
        return Err(Error::EmptyInput("matrix rows"));
    }
    let c = rows[0].len();
    if let Some(bad) = rows.iter().find(|row| row.len() != c) {
        return Err(Error::DimensionMismatch {
            context: "matrix row length",
            expected: c,
            actual: bad.len(),
        });
    }
    Ok(DMatrix::from_row_iterator(r, c, rows.iter().flatten().copied()))
}

/// Metadata written next to a simulated sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMetadata {
    pub n: usize,
    pub p: usize,
    pub seed: u64,
    pub burn_in: usize,
    pub innovation: InnovationSpec,
    pub transition: Vec<Vec<f64>>,
    pub spectral_radius: f64,
    pub decay_index: usize,
    pub decay_gamma: f64,
    pub decay_threshold: f64,
}

impl SampleMetadata {
    pub fn new(sample: &VarSample, a: &TransitionMatrix) -> Self {
        Self {
            n: sample.n,
            p: sample.p,
            seed: sample.seed.unwrap_or_default(),
            burn_in: sample.burn_in.unwrap_or_default(),
            innovation: sample.innovation.clone().unwrap_or_else(|| InnovationSpec::gaussian(1.0)),
            transition: matrix_rows(&a.entries),
            spectral_radius: a.spectral_radius,
            decay_index: a.decay_index,
            decay_gamma: a.decay_gamma,
            decay_threshold: a.decay_threshold,
        }
    }
}
