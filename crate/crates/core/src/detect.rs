//! Forecast residuals to fault decisions: per-point MSE over channels,
//! exponential smoothing with a half-life, quantile threshold and the
//! strict `error > threshold` rule.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::TimeSeries;
use crate::error::{Error, Result};
use crate::forecast::ForecastResult;

pub const DEFAULT_QUANTILE: f64 = 0.999;
pub const MIN_THRESHOLD_POINTS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Operator threshold on the smoothed error. Infinite when unset; stored
    /// as `null`.
    #[serde(with = "finite_or_null")]
    pub threshold: f64,
    pub quantile_q: f64,
    /// EMA half-life in time steps, normally twice the batch length.
    pub halflife: f64,
}

mod finite_or_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_some(v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl DetectorConfig {
    pub fn for_window(w: usize) -> Self {
        DetectorConfig {
            threshold: f64::INFINITY,
            quantile_q: DEFAULT_QUANTILE,
            halflife: 2.0 * w as f64,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.quantile_q > 0.0 && self.quantile_q < 1.0) {
            return Err(Error::InvalidParam(format!(
                "quantile must lie in (0, 1), got {}",
                self.quantile_q
            )));
        }
        if !(self.halflife >= 1.0) {
            return Err(Error::InvalidParam(format!(
                "halflife must be ≥ 1, got {}",
                self.halflife
            )));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidParam("threshold must be ≥ 0".into()));
        }
        Ok(())
    }
}

/// Raw and smoothed error over the valid rows `valid_from..valid_from + len`.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorSeries {
    pub raw: Vec<f64>,
    pub smoothed: Vec<f64>,
    pub valid_from: usize,
}

impl ErrorSeries {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    pub fn valid_range(&self) -> std::ops::Range<usize> {
        self.valid_from..self.valid_from + self.raw.len()
    }
}

/// Mean over channels of the squared residual, one value per row.
pub fn pointwise_mse(measured: &[f64], predicted: &[f64], channels: usize) -> Result<Vec<f64>> {
    if measured.len() != predicted.len() || channels == 0 || !measured.len().is_multiple_of(channels) {
        return Err(Error::Shape(format!(
            "pointwise_mse: {} measured vs {} predicted values over {channels} channels",
            measured.len(),
            predicted.len()
        )));
    }
    Ok(measured
        .chunks_exact(channels)
        .zip(predicted.chunks_exact(channels))
        .map(|(x, y)| x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / channels as f64)
        .collect())
}

/// EMA decay factor whose `halflife`-th power is ½.
pub fn ema_decay(halflife: f64) -> f64 {
    0.5f64.powf(1.0 / halflife)
}

/// Exponential moving average seeded with the first sample.
pub fn ema_smooth(raw: &[f64], halflife: f64) -> Result<Vec<f64>> {
    if !(halflife >= 1.0) {
        return Err(Error::InvalidParam(format!("halflife must be ≥ 1, got {halflife}")));
    }
    let lambda = ema_decay(halflife);
    let mut out = Vec::with_capacity(raw.len());
    let Some(&first) = raw.first() else {
        return Ok(out);
    };
    let mut s = first;
    out.push(s);
    for &x in &raw[1..] {
        s = lambda * s + (1.0 - lambda) * x;
        out.push(s);
    }
    Ok(out)
}

/// Empirical quantile with linear interpolation between order statistics
/// (position `(n − 1)·q` in the sorted sample).
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::TooShort {
            required: 1,
            actual: 0,
        });
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParam(format!("quantile level {q} outside [0, 1]")));
    }
    if values.iter().any(|v| v.is_nan()) {
        return Err(Error::Numeric("NaN in error sample".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let pos = (sorted.len() - 1) as f64 * q;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(sorted[lo] + frac * (sorted[hi] - sorted[lo]))
}

/// Threshold from smoothed errors on held-out normal data.
pub fn fit_threshold(smoothed: &[f64], q: f64) -> Result<f64> {
    if smoothed.len() < MIN_THRESHOLD_POINTS {
        return Err(Error::TooShort {
            required: MIN_THRESHOLD_POINTS,
            actual: smoothed.len(),
        });
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidParam(format!("quantile must lie in (0, 1), got {q}")));
    }
    quantile(smoothed, q)
}

/// `true` (fault) strictly above the threshold, normal at or below it.
pub fn decide(smoothed: &[f64], threshold: f64) -> Vec<bool> {
    smoothed.iter().map(|&e| e > threshold).collect()
}

/// Residual errors of a forecast against the normalized measurements.
pub fn error_series(measured: &TimeSeries, forecast: &ForecastResult, halflife: f64) -> Result<ErrorSeries> {
    if measured.names() != forecast.predicted.names() || measured.len() != forecast.predicted.len() {
        return Err(Error::Shape(
            "measured series and forecast differ in channels or length".into(),
        ));
    }
    let range = forecast.valid_range();
    let raw = pointwise_mse(
        measured.rows(range.start, range.end),
        forecast.predicted.rows(range.start, range.end),
        measured.width(),
    )?;
    let smoothed = ema_smooth(&raw, halflife)?;
    Ok(ErrorSeries {
        raw,
        smoothed,
        valid_from: range.start,
    })
}

/// CSV of `time,raw,smoothed,threshold,decision` over the valid rows.
pub fn write_error_csv(path: impl AsRef<Path>, errors: &ErrorSeries, threshold: f64, dt: f64) -> Result<()> {
    let path = path.as_ref();
    let io = |e| Error::io(path, e);
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    writeln!(out, "time,raw,smoothed,threshold,decision").map_err(io)?;
    for (k, (r, s)) in errors.raw.iter().zip(&errors.smoothed).enumerate() {
        let t = (errors.valid_from + k) as f64 * dt;
        writeln!(out, "{t},{r},{s},{threshold},{}", u8::from(*s > threshold)).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mse_examples() {
        let x = vec![0.3; 12];
        assert_eq!(pointwise_mse(&x, &x, 6).unwrap(), vec![0.0, 0.0]);
        let y: Vec<f64> = x.iter().map(|v| v + 1.0).collect();
        for v in pointwise_mse(&x, &y, 6).unwrap() {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(pointwise_mse(&x, &y[..6], 6).is_err());
    }

    #[test]
    fn ema_fixed_point_and_half_life() {
        let c = vec![2.5; 50];
        assert!(ema_smooth(&c, 7.0).unwrap().iter().all(|v| (v - 2.5).abs() < 1e-15));

        let h = 240usize;
        let mut impulse = vec![0.0; h + 1];
        impulse[0] = 1.0;
        let s = ema_smooth(&impulse, h as f64).unwrap();
        assert!((s[h] / s[0] - 0.5).abs() < 1e-12);
        assert!((s[h - 1] / s[0] - 0.5).abs() > 1e-4);
        assert!(ema_smooth(&[1.0], 0.5).is_err());
    }

    #[test]
    fn ema_stays_within_running_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let raw: Vec<f64> = (0..300).map(|_| rng.gen_range(0.0..10.0)).collect();
        let s = ema_smooth(&raw, 13.0).unwrap();
        for t in 0..raw.len() {
            let lo = raw[..=t].iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = raw[..=t].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(s[t] >= lo - 1e-12 && s[t] <= hi + 1e-12);
        }
    }

    #[test]
    fn threshold_examples() {
        let grid: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(fit_threshold(&grid, 0.5).unwrap(), 500.5);
        assert_eq!(fit_threshold(&vec![0.7; 1200], 0.999).unwrap(), 0.7);
        assert!(matches!(
            fit_threshold(&grid[..999], 0.5),
            Err(Error::TooShort { .. })
        ));
    }

    #[test]
    fn decision_rule_boundaries() {
        let e = vec![0.4; 10];
        assert!(decide(&e, 0.4).iter().all(|d| !d));
        assert!(decide(&e, 0.0).iter().all(|d| *d));
        assert!(decide(&e, f64::INFINITY).iter().all(|d| !d));
    }

    #[test]
    fn config_validation() {
        let mut c = DetectorConfig::for_window(120);
        assert_eq!(c.halflife, 240.0);
        c.threshold = 1.0;
        assert!(c.validate().is_ok());
        c.quantile_q = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn unset_threshold_round_trips_as_null() {
        let c = DetectorConfig::for_window(10);
        let text = serde_json::to_string(&c).unwrap();
        assert!(text.contains("\"threshold\":null"));
        let back: DetectorConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back.threshold, f64::INFINITY);
    }
}
