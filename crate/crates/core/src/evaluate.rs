//! Interval-based scoring of fault decisions against the DANGER labels,
//! threshold sweeps, and a PCA residual (Q statistic) baseline.
//!
//! The valid region of each trace is cut into consecutive intervals of
//! equal length; a trailing partial interval is dropped. An interval is a
//! predicted fault if any decision inside it fires and a true fault if any
//! DANGER label inside it is set. Precision, recall and F1 are computed on
//! interval counts summed over all traces.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::dataio::{NormStats, TimeSeries};
use crate::detect::decide;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn intervals(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    /// Precision, or `None` when nothing was predicted positive.
    pub fn precision(&self) -> Option<f64> {
        let pred = self.tp + self.fp;
        (pred > 0).then(|| self.tp as f64 / pred as f64)
    }

    pub fn recall(&self) -> f64 {
        if self.positives() == 0 {
            0.0
        } else {
            self.tp as f64 / self.positives() as f64
        }
    }
}

impl std::ops::Add for Confusion {
    type Output = Confusion;

    fn add(self, o: Confusion) -> Confusion {
        Confusion {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
            tn: self.tn + o.tn,
        }
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// One threshold's aggregate result. When no interval was predicted
/// positive, precision is reported as 1 and `precision_undefined` is set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub threshold: f64,
    pub counts: Confusion,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub precision_undefined: bool,
}

impl EvalRow {
    pub fn new(threshold: f64, counts: Confusion) -> Self {
        let recall = counts.recall();
        let (precision, undefined) = match counts.precision() {
            Some(p) => (p, false),
            None => (1.0, true),
        };
        EvalRow {
            threshold,
            counts,
            precision,
            recall,
            f1: f1_score(precision, recall),
            precision_undefined: undefined,
        }
    }
}

/// Confusion counts over consecutive intervals of `interval_length`.
pub fn score_intervals(decisions: &[bool], danger: &[bool], interval_length: usize) -> Result<Confusion> {
    if decisions.len() != danger.len() {
        return Err(Error::Shape(format!(
            "{} decisions vs {} labels",
            decisions.len(),
            danger.len()
        )));
    }
    if interval_length == 0 {
        return Err(Error::InvalidParam("interval length must be ≥ 1".into()));
    }
    let mut c = Confusion::default();
    for (d, g) in decisions
        .chunks_exact(interval_length)
        .zip(danger.chunks_exact(interval_length))
    {
        match (d.iter().any(|&x| x), g.iter().any(|&x| x)) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Smoothed anomaly scores of one trace and the DANGER labels on the same
/// rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceScores {
    pub name: String,
    pub scores: Vec<f64>,
    pub danger: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub interval_length: usize,
    pub rows: Vec<EvalRow>,
    /// `per_trace[r][k]`: counts of trace k at threshold row r.
    pub per_trace: Vec<Vec<Confusion>>,
    pub trace_names: Vec<String>,
}

impl EvalReport {
    /// Row with the highest F1; the lowest threshold wins ties.
    pub fn best(&self) -> &EvalRow {
        self.rows
            .iter()
            .fold(None::<&EvalRow>, |best, r| match best {
                Some(b) if b.f1 >= r.f1 => Some(b),
                _ => Some(r),
            })
            .expect("report has at least one row")
    }

    /// Aligned text table.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:>12} {:>5} {:>5} {:>5} {:>5} {:>9} {:>7} {:>7}",
            "threshold", "TP", "FP", "FN", "TN", "precision", "recall", "F1"
        );
        for r in &self.rows {
            let c = r.counts;
            let _ = writeln!(
                out,
                "{:>12.6} {:>5} {:>5} {:>5} {:>5} {:>8.3}{} {:>7.3} {:>7.3}",
                r.threshold,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                r.precision,
                if r.precision_undefined { "*" } else { " " },
                r.recall,
                r.f1
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "threshold,tp,fp,fn,tn,precision,recall,f1,precision_undefined").map_err(io)?;
        for r in &self.rows {
            let c = r.counts;
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.threshold,
                c.tp,
                c.fp,
                c.fn_,
                c.tn,
                r.precision,
                r.recall,
                r.f1,
                u8::from(r.precision_undefined)
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Threshold/precision/recall/F1 curve data.
    pub fn write_curve_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "threshold,precision,recall,f1").map_err(io)?;
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.threshold, r.precision, r.recall, r.f1).map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Per-trace counts at one threshold row.
    pub fn write_per_trace_csv(&self, path: impl AsRef<Path>, row: usize) -> Result<()> {
        let path = path.as_ref();
        let io = |e| Error::io(path, e);
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        writeln!(out, "trace,threshold,tp,fp,fn,tn").map_err(io)?;
        for (name, c) in self.trace_names.iter().zip(&self.per_trace[row]) {
            writeln!(
                out,
                "{name},{},{},{},{},{}",
                self.rows[row].threshold, c.tp, c.fp, c.fn_, c.tn
            )
            .map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Scores every trace at every threshold and aggregates per threshold.
pub fn sweep_thresholds(traces: &[TraceScores], grid: &[f64], interval_length: usize) -> Result<EvalReport> {
    if grid.is_empty() {
        return Err(Error::InvalidParam("threshold grid is empty".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut per_trace = Vec::with_capacity(grid.len());
    for &threshold in grid {
        let counts = traces
            .iter()
            .map(|tr| score_intervals(&decide(&tr.scores, threshold), &tr.danger, interval_length))
            .collect::<Result<Vec<_>>>()?;
        let total = counts.iter().copied().fold(Confusion::default(), |a, b| a + b);
        rows.push(EvalRow::new(threshold, total));
        per_trace.push(counts);
    }
    Ok(EvalReport {
        interval_length,
        rows,
        per_trace,
        trace_names: traces.iter().map(|t| t.name.clone()).collect(),
    })
}

/// `count` ascending thresholds from `lo` to `hi`, geometrically spaced
/// when `lo > 0` so that the low end is resolved finely.
pub fn threshold_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count <= 1 || !(hi > lo) {
        return vec![lo];
    }
    let steps = (count - 1) as f64;
    (0..count)
        .map(|k| {
            let f = k as f64 / steps;
            if lo > 0.0 {
                lo * (hi / lo).powf(f)
            } else {
                lo + (hi - lo) * f
            }
        })
        .collect()
}

/// Largest finite score over all traces.
pub fn max_score(traces: &[TraceScores]) -> f64 {
    traces
        .iter()
        .flat_map(|t| t.scores.iter().copied())
        .filter(|v| v.is_finite())
        .fold(0.0, f64::max)
}

/// Principal subspace of normal data; the anomaly score of a point is its
/// squared distance to that subspace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaDetector {
    /// k × m, orthonormal rows, by decreasing variance.
    pub basis: Vec<Vec<f64>>,
    pub eigenvalues: Vec<f64>,
    pub norm: NormStats,
    pub threshold: f64,
}

impl PcaDetector {
    pub fn k(&self) -> usize {
        self.basis.len()
    }

    pub fn retained_fraction(&self) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        self.eigenvalues[..self.k()].iter().sum::<f64>() / total
    }
}

/// Eigenpairs of the channel covariance of a (normalized) series, sorted by
/// decreasing eigenvalue. Each pair is `(λ, unit eigenvector)`.
pub fn covariance_eigen(series: &TimeSeries) -> Result<Vec<(f64, Vec<f64>)>> {
    let (n, m) = (series.len(), series.width());
    if n < 2 {
        return Err(Error::TooShort {
            required: 2,
            actual: n,
        });
    }
    let mut mean = vec![0.0; m];
    for t in 0..n {
        for (a, v) in mean.iter_mut().zip(series.row(t)) {
            *a += v / n as f64;
        }
    }
    let mut cov = DMatrix::<f64>::zeros(m, m);
    for t in 0..n {
        let r = series.row(t);
        for i in 0..m {
            let di = r[i] - mean[i];
            for j in i..m {
                cov[(i, j)] += di * (r[j] - mean[j]);
            }
        }
    }
    for i in 0..m {
        for j in i..m {
            let v = cov[(i, j)] / (n - 1) as f64;
            cov[(i, j)] = v;
            cov[(j, i)] = v;
        }
    }
    if cov.trace() <= 0.0 {
        return Err(Error::Numeric(
            "degenerate covariance: every channel is constant".into(),
        ));
    }
    let eig = SymmetricEigen::new(cov);
    let mut pairs: Vec<(f64, Vec<f64>)> = (0..m)
        .map(|k| {
            (
                eig.eigenvalues[k].max(0.0),
                eig.eigenvectors.column(k).iter().copied().collect(),
            )
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    Ok(pairs)
}

/// Keeps the fewest leading components explaining at least
/// `variance_fraction` of the total variance.
pub fn pca_fit(series: &TimeSeries, norm: NormStats, variance_fraction: f64) -> Result<PcaDetector> {
    if !(variance_fraction > 0.0 && variance_fraction <= 1.0) {
        return Err(Error::InvalidParam(format!(
            "variance fraction must lie in (0, 1], got {variance_fraction}"
        )));
    }
    let pairs = covariance_eigen(series)?;
    let total: f64 = pairs.iter().map(|p| p.0).sum();
    let mut k = 0;
    let mut acc = 0.0;
    while k < pairs.len() {
        acc += pairs[k].0;
        k += 1;
        if acc >= variance_fraction * total * (1.0 - 1e-12) {
            break;
        }
    }
    Ok(PcaDetector {
        basis: pairs[..k].iter().map(|p| p.1.clone()).collect(),
        eigenvalues: pairs.iter().map(|p| p.0).collect(),
        norm,
        threshold: f64::INFINITY,
    })
}

/// Squared residual after projecting each row onto the retained subspace.
pub fn pca_score(detector: &PcaDetector, series: &TimeSeries) -> Result<Vec<f64>> {
    let m = detector.norm.mean.len();
    if series.width() != m {
        return Err(Error::Shape(format!(
            "PCA detector expects {m} channels, series has {}",
            series.width()
        )));
    }
    Ok((0..series.len())
        .map(|t| {
            let x = series.row(t);
            let mut resid = x.to_vec();
            for v in &detector.basis {
                let c: f64 = v.iter().zip(x).map(|(a, b)| a * b).sum();
                resid.iter_mut().zip(v).for_each(|(r, vi)| *r -= c * vi);
            }
            resid.iter().map(|r| r * r).sum()
        })
        .collect())
}
