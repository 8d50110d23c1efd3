//! CSV ingestion and train-scale normalization.

use std::collections::HashSet;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sequence::{row_norm, Sequence};

/// A dated multivariate series in chronological order.
#[derive(Debug, Clone)]
pub struct TimeSeries {
    dates: Vec<NaiveDate>,
    values: Sequence,
}

impl TimeSeries {
    pub fn new(dates: Vec<NaiveDate>, values: Sequence) -> Result<Self> {
        if dates.len() != values.len() {
            return Err(Error::LengthMismatch {
                left: dates.len(),
                right: values.len(),
            });
        }
        Ok(TimeSeries { dates, values })
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn values(&self) -> &Sequence {
        &self.values
    }
}

fn ingestion_error(path: &Path, detail: String) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        detail,
    }
}

/// Reads a CSV with a header row, one ISO-8601 date column, and one or more
/// numeric value columns. Rows must be date-sorted or sortable; duplicate
/// dates are rejected.
pub fn ingest_csv(path: &Path, date_column: &str, value_columns: &[String]) -> Result<TimeSeries> {
    if value_columns.is_empty() {
        return Err(Error::Config("no value columns configured".into()));
    }
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| ingestion_error(path, format!("cannot read header: {e}")))?
        .clone();
    let find = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ingestion_error(path, format!("missing column {name:?}")))
    };
    let date_index = find(date_column)?;
    let value_indices: Vec<usize> = value_columns
        .iter()
        .map(|c| find(c))
        .collect::<Result<_>>()?;

    let mut rows: Vec<(NaiveDate, Vec<f64>)> = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| ingestion_error(path, format!("malformed row: {e}")))?;
        let line = record.position().map_or(0, |p| p.line());
        let date_text = record.get(date_index).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| {
            ingestion_error(
                path,
                format!("line {line}: unparseable date {date_text:?} in column {date_column:?}"),
            )
        })?;
        let mut values = Vec::with_capacity(value_indices.len());
        for (&index, name) in value_indices.iter().zip(value_columns) {
            let text = record.get(index).unwrap_or("");
            let value: f64 = text.trim().parse().map_err(|_| {
                ingestion_error(
                    path,
                    format!("line {line}: unparseable number {text:?} in column {name:?}"),
                )
            })?;
            values.push(value);
        }
        rows.push((date, values));
    }

    let mut seen = HashSet::new();
    for (date, _) in &rows {
        if !seen.insert(*date) {
            return Err(ingestion_error(path, format!("duplicate date {date}")));
        }
    }
    if !rows.windows(2).all(|pair| pair[0].0 < pair[1].0) {
        rows.sort_by_key(|(date, _)| *date);
    }

    let channels = value_columns.len();
    let mut dates = Vec::with_capacity(rows.len());
    let mut flat = Vec::with_capacity(rows.len() * channels);
    for (date, values) in rows {
        dates.push(date);
        flat.extend(values);
    }
    let values = Sequence::new(flat, channels)?;
    TimeSeries::new(dates, values)
}

/// How the series is scaled before windowing. The scale statistic is always
/// computed from the training range only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    None,
    /// Divide by the largest absolute entry in the training range.
    DivideByMax,
    /// Divide by the largest Euclidean row norm in the training range, so the
    /// scaled training sup-norm is exactly 1.
    #[default]
    DivideByTrainSup,
}

/// Scales a series and returns the scale factor used; multiplying forecasts
/// by the returned scale recovers original units.
pub fn normalize(
    series: &Sequence,
    mode: Normalization,
    train_rows: usize,
) -> Result<(Sequence, f64)> {
    if train_rows > series.len() {
        return Err(Error::Config(format!(
            "training range {train_rows} exceeds series length {}",
            series.len()
        )));
    }
    let scale = match mode {
        Normalization::None => 1.0,
        Normalization::DivideByMax => (0..train_rows)
            .flat_map(|i| series.row(i).iter().copied())
            .fold(0.0f64, |acc, v| acc.max(v.abs())),
        Normalization::DivideByTrainSup => (0..train_rows)
            .map(|i| row_norm(series.row(i)))
            .fold(0.0f64, f64::max),
    };
    if scale == 0.0 {
        return Err(Error::DegenerateData(
            "zero training maximum; cannot normalize".into(),
        ));
    }
    let scaled: Vec<f64> = series
        .rows()
        .flat_map(|row| row.iter().map(|v| v / scale))
        .collect();
    Ok((Sequence::new(scaled, series.channels())?, scale))
}
