//! Tabular time series: CSV I/O in the GHL dataset layout, channel
//! selection, per-channel standardization and fixed-length batching.
//!
//! Files carry a header row of channel names and one row per time point.
//! A column named `time` (any case) is treated as the time axis: it sets
//! `dt` and is not exposed as a channel. Everything else, including the
//! `ATTACK`/`DANGER`/`FAULT` label columns, is an ordinary channel that can
//! be selected by name.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ATTACK: &str = "ATTACK";
pub const DANGER: &str = "DANGER";
pub const FAULT: &str = "FAULT";

/// An n×m grid of samples on a uniform time grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    names: Vec<String>,
    values: Vec<f64>,
    dt: f64,
}

impl TimeSeries {
    pub fn new(names: Vec<String>, rows: Vec<Vec<f64>>, dt: f64) -> Result<Self> {
        let m = names.len();
        let mut values = Vec::with_capacity(rows.len() * m);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != m {
                return Err(Error::Shape(format!(
                    "row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            values.extend_from_slice(row);
        }
        Self::from_flat(names, values, dt)
    }

    pub fn from_flat(names: Vec<String>, values: Vec<f64>, dt: f64) -> Result<Self> {
        let m = names.len();
        if m == 0 {
            return Err(Error::Shape("series needs at least one channel".into()));
        }
        if values.is_empty() || !values.len().is_multiple_of(m) {
            return Err(Error::Shape(format!(
                "{} values do not form whole rows of {m} channels",
                values.len()
            )));
        }
        for (i, name) in names.iter().enumerate() {
            if names[..i].contains(name) {
                return Err(Error::Shape(format!("duplicate channel name {name:?}")));
            }
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidParam(format!("dt must be positive, got {dt}")));
        }
        Ok(TimeSeries { names, values, dt })
    }

    /// Builds a series from column vectors of equal length.
    pub fn from_columns(names: Vec<String>, columns: &[Vec<f64>], dt: f64) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::Shape(format!(
                "{} names for {} columns",
                names.len(),
                columns.len()
            )));
        }
        let n = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Shape("columns have different lengths".into()));
        }
        let m = columns.len();
        let mut values = vec![0.0; n * m];
        for (j, col) in columns.iter().enumerate() {
            for (t, v) in col.iter().enumerate() {
                values[t * m + j] = *v;
            }
        }
        Self::from_flat(names, values, dt)
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn width(&self) -> usize {
        self.names.len()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let m = self.width();
        &self.values[t * m..(t + 1) * m]
    }

    /// Rows `start..end` as a contiguous row-major slice.
    pub fn rows(&self, start: usize, end: usize) -> &[f64] {
        let m = self.width();
        &self.values[start * m..end * m]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.width()).copied().collect()
    }

    pub fn channel(&self, name: &str) -> Option<Vec<f64>> {
        self.channel_index(name).map(|j| self.column(j))
    }

    /// New series holding only the named channels, in the requested order.
    pub fn select<S: AsRef<str>>(&self, channels: &[S]) -> Result<TimeSeries> {
        let idx = channels
            .iter()
            .map(|c| {
                self.channel_index(c.as_ref())
                    .ok_or_else(|| Error::ChannelNotFound {
                        context: "select".into(),
                        name: c.as_ref().to_string(),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        let n = self.len();
        let mut values = Vec::with_capacity(n * idx.len());
        for t in 0..n {
            let row = self.row(t);
            values.extend(idx.iter().map(|&j| row[j]));
        }
        let names = channels.iter().map(|c| c.as_ref().to_string()).collect();
        TimeSeries::from_flat(names, values, self.dt)
    }

    /// Rows `start..end` as a new series.
    pub fn slice(&self, start: usize, end: usize) -> Result<TimeSeries> {
        if start >= end || end > self.len() {
            return Err(Error::Shape(format!(
                "row range {start}..{end} invalid for {} rows",
                self.len()
            )));
        }
        TimeSeries::from_flat(self.names.clone(), self.rows(start, end).to_vec(), self.dt)
    }

    /// Keeps every `factor`-th row, starting with the first.
    pub fn decimate(&self, factor: usize) -> Result<TimeSeries> {
        if factor == 0 {
            return Err(Error::InvalidParam("decimation factor must be ≥ 1".into()));
        }
        let mut values = Vec::with_capacity(self.values.len() / factor + self.width());
        for t in (0..self.len()).step_by(factor) {
            values.extend_from_slice(self.row(t));
        }
        TimeSeries::from_flat(self.names.clone(), values, self.dt * factor as f64)
    }

    /// Appends the channels of `other` (same length) to the right.
    pub fn hstack(&self, other: &TimeSeries) -> Result<TimeSeries> {
        if self.len() != other.len() {
            return Err(Error::Shape(format!(
                "cannot stack {} rows with {} rows",
                self.len(),
                other.len()
            )));
        }
        let mut names = self.names.clone();
        names.extend(other.names.iter().cloned());
        let mut values = Vec::with_capacity(self.values.len() + other.values.len());
        for t in 0..self.len() {
            values.extend_from_slice(self.row(t));
            values.extend_from_slice(other.row(t));
        }
        TimeSeries::from_flat(names, values, self.dt)
    }
}

fn is_time_column(name: &str) -> bool {
    name.trim().eq_ignore_ascii_case("time")
}

/// Reads a CSV file. When `expected_channels` is given, every listed channel
/// must be present in the header.
pub fn read_csv<S: AsRef<str>>(
    path: impl AsRef<Path>,
    expected_channels: Option<&[S]>,
) -> Result<TimeSeries> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let time_col = header.iter().position(|h| is_time_column(h));
    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| Some(*j) != time_col)
        .map(|(_, h)| h.clone())
        .collect();
    if let Some(expected) = expected_channels {
        for c in expected {
            if !names.iter().any(|n| n == c.as_ref()) {
                return Err(Error::ChannelNotFound {
                    context: path.display().to_string(),
                    name: c.as_ref().to_string(),
                });
            }
        }
    }

    let mut values = Vec::new();
    let mut times = Vec::with_capacity(2);
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        // 1-based file line numbers, header is line 1
        let row = i + 2;
        if record.len() != header.len() {
            return Err(Error::RaggedRow {
                path: path.to_path_buf(),
                row,
                expected: header.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| Error::NonNumeric {
                path: path.to_path_buf(),
                row,
                column: j + 1,
                name: header[j].clone(),
                value: cell.to_string(),
            })?;
            if Some(j) == time_col {
                if times.len() < 2 {
                    times.push(v);
                }
            } else {
                values.push(v);
            }
        }
    }
    if values.is_empty() {
        return Err(Error::Format {
            path: path.to_path_buf(),
            what: "csv",
            detail: "no data rows".into(),
        });
    }
    let dt = match times.as_slice() {
        [a, b] if b > a => b - a,
        _ => 1.0,
    };
    TimeSeries::from_flat(names, values, dt)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        what: "csv",
        detail: e.to_string(),
    }
}

/// Writes the series with a leading `time` column. Numbers use Rust's
/// shortest round-trip formatting, so reading the file back is exact.
pub fn write_csv(path: impl AsRef<Path>, series: &TimeSeries) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_series(&mut out, series).map_err(|e| Error::io(path, e))?;
    out.flush().map_err(|e| Error::io(path, e))
}

fn write_series<W: Write>(out: &mut W, series: &TimeSeries) -> std::io::Result<()> {
    write!(out, "time")?;
    for name in series.names() {
        write!(out, ",{name}")?;
    }
    writeln!(out)?;
    for t in 0..series.len() {
        write!(out, "{}", t as f64 * series.dt())?;
        for v in series.row(t) {
            write!(out, ",{v}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Per-channel mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub channels: Vec<String>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl NormStats {
    /// Channels with zero spread are passed through as 0 by [`apply_norm`].
    pub fn is_constant(&self, j: usize) -> bool {
        self.std[j] == 0.0
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("NormStats serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.to_path_buf(),
            what: "normalization stats",
            detail: e.to_string(),
        })
    }
}

pub fn fit_norm(series: &TimeSeries) -> Result<NormStats> {
    let n = series.len();
    if n < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: n,
        });
    }
    let m = series.width();
    let mut mean = vec![0.0; m];
    for t in 0..n {
        for (acc, v) in mean.iter_mut().zip(series.row(t)) {
            *acc += v;
        }
    }
    mean.iter_mut().for_each(|x| *x /= n as f64);
    let mut var = vec![0.0; m];
    for t in 0..n {
        for ((acc, v), mu) in var.iter_mut().zip(series.row(t)).zip(&mean) {
            *acc += (v - mu) * (v - mu);
        }
    }
    let std = var
        .iter()
        .zip(&mean)
        .map(|(v, mu)| {
            let s = (v / n as f64).sqrt();
            // rounding in the mean leaves a residue on constant channels
            if s <= 1e-12 * mu.abs().max(1.0) {
                0.0
            } else {
                s
            }
        })
        .collect();
    Ok(NormStats {
        channels: series.names().to_vec(),
        mean,
        std,
    })
}

fn check_dims(series: &TimeSeries, stats: &NormStats) -> Result<()> {
    if stats.mean.len() != series.width() || stats.std.len() != series.width() {
        return Err(Error::Shape(format!(
            "normalization stats have {} channels, series has {}",
            stats.mean.len(),
            series.width()
        )));
    }
    Ok(())
}

pub fn apply_norm(series: &TimeSeries, stats: &NormStats) -> Result<TimeSeries> {
    check_dims(series, stats)?;
    map_rows(series, |j, v| {
        if stats.is_constant(j) {
            0.0
        } else {
            (v - stats.mean[j]) / stats.std[j]
        }
    })
}

pub fn invert_norm(series: &TimeSeries, stats: &NormStats) -> Result<TimeSeries> {
    check_dims(series, stats)?;
    map_rows(series, |j, v| {
        if stats.is_constant(j) {
            stats.mean[j]
        } else {
            v * stats.std[j] + stats.mean[j]
        }
    })
}

fn map_rows(series: &TimeSeries, f: impl Fn(usize, f64) -> f64) -> Result<TimeSeries> {
    let m = series.width();
    let values = series
        .values()
        .iter()
        .enumerate()
        .map(|(k, &v)| f(k % m, v))
        .collect();
    TimeSeries::from_flat(series.names().to_vec(), values, series.dt())
}

/// Window of `w` consecutive rows. `index` and `start` are 1-based, with
/// `start = w·(index − 1) + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    pub index: usize,
    pub start: usize,
    pub values: Vec<f64>,
}

impl Batch {
    /// 0-based row offset of the first point.
    pub fn offset(&self) -> usize {
        self.start - 1
    }
}

/// Splits the series into ⌊n/w⌋ full batches; a shorter tail is dropped.
pub fn make_batches(series: &TimeSeries, w: usize) -> Result<Vec<Batch>> {
    if w == 0 {
        return Err(Error::InvalidParam("batch length w must be ≥ 1".into()));
    }
    Ok((0..series.len() / w)
        .map(|k| Batch {
            index: k + 1,
            start: w * k + 1,
            values: series.rows(k * w, (k + 1) * w).to_vec(),
        })
        .collect())
}
