//! Delimited numeric text to normalized sliding windows.

use std::path::Path;

use ndarray::{s, Array2};

use super::normalize::{normalize, NormalizationState};
use crate::series::SeriesWindow;
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct CsvOptions {
    pub delimiter: char,
    pub window_len: usize,
    pub stride: usize,
    /// Zero-based columns to keep, in order; `None` keeps all of them.
    pub feature_columns: Option<Vec<usize>>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            delimiter: ',',
            window_len: 24,
            stride: 1,
            feature_columns: None,
        }
    }
}

/// Numeric table from delimited text. The first non-empty line is taken as a
/// header when any selected cell in it fails to parse. Row and column numbers
/// in errors are one-based and refer to the text.
pub fn parse_table(text: &str, opts: &CsvOptions) -> Result<Array2<f64>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).peekable();
    let Some(&(_, first)) = lines.peek() else {
        return Err(Error::InsufficientData("input has no rows".into()));
    };
    let width = first.split(opts.delimiter).count();
    let columns = match &opts.feature_columns {
        Some(c) if c.is_empty() => return Err(Error::Config("feature column list is empty".into())),
        Some(c) => {
            if let Some(&bad) = c.iter().find(|&&i| i >= width) {
                return Err(Error::Config(format!("column {bad} is out of range for {width} columns")));
            }
            c.clone()
        }
        None => (0..width).collect(),
    };
    let cells: Vec<&str> = first.split(opts.delimiter).collect();
    if columns.iter().any(|&c| cells[c].trim().parse::<f64>().is_err()) {
        lines.next();
    }
    let mut data = Vec::new();
    let mut rows = 0;
    for (n, line) in lines {
        let cells: Vec<&str> = line.split(opts.delimiter).collect();
        if cells.len() != width {
            return Err(Error::Parse {
                row: n + 1,
                column: cells.len().min(width) + 1,
                message: format!("expected {width} cells, found {}", cells.len()),
            });
        }
        for &c in &columns {
            let v: f64 = cells[c].trim().parse().map_err(|_| Error::Parse {
                row: n + 1,
                column: c + 1,
                message: format!("{:?} is not a number", cells[c].trim()),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    row: n + 1,
                    column: c + 1,
                    message: "value is not finite".into(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    Array2::from_shape_vec((rows, columns.len()), data).map_err(|e| Error::Validation(e.to_string()))
}

/// Starts of every full window of `len` rows at `stride`.
pub fn window_starts(rows: usize, len: usize, stride: usize) -> Result<Vec<usize>> {
    if len == 0 || stride == 0 {
        return Err(Error::Config("window length and stride must be positive".into()));
    }
    if rows < len {
        return Err(Error::InsufficientData(format!("{rows} rows cannot fill a window of {len}")));
    }
    Ok((0..=(rows - len) / stride).map(|i| i * stride).collect())
}

/// Fits per-column min-max scaling on the whole table, then cuts windows.
pub fn windows_from_table(table: &Array2<f64>, opts: &CsvOptions) -> Result<(Vec<SeriesWindow>, NormalizationState)> {
    let starts = window_starts(table.nrows(), opts.window_len, opts.stride)?;
    let state = NormalizationState::fit(table)?;
    let windows = starts
        .into_iter()
        .map(|s| {
            let raw = SeriesWindow::new(table.slice(s![s..s + opts.window_len, ..]).to_owned())?;
            normalize(&raw, &state)
        })
        .collect::<Result<_>>()?;
    Ok((windows, state))
}

pub fn csv_ingest(path: &Path, opts: &CsvOptions) -> Result<(Vec<SeriesWindow>, NormalizationState)> {
    let text = std::fs::read_to_string(path)?;
    windows_from_table(&parse_table(&text, opts)?, opts)
}
