//! Batch-ahead forecasting over a whole series.
//!
//! The series is cut into batches of `w` rows. With the model state zeroed
//! at the start, batch i is fed through the network and its `w` outputs
//! become the forecast for batch i+1. Rows of the first batch and of any
//! trailing partial batch have no forecast and are filled with NaN.

use std::ops::Range;

use crate::dataio::{make_batches, TimeSeries};
use crate::error::{Error, Result};
use crate::neural::LstmModel;

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastResult {
    /// Same grid and channels as the input; row t forecasts observation t.
    pub predicted: TimeSeries,
    /// First row (0-based) holding a forecast.
    pub valid_from: usize,
    /// One past the last row holding a forecast.
    pub valid_to: usize,
}

impl ForecastResult {
    pub fn valid_range(&self) -> Range<usize> {
        self.valid_from..self.valid_to
    }
}

/// Checks that `series` carries exactly the channels the model was trained
/// on, by name and in order.
pub fn check_channels<S: AsRef<str>>(expected: &[S], series: &TimeSeries) -> Result<()> {
    let same = expected.len() == series.width()
        && expected.iter().zip(series.names()).all(|(a, b)| a.as_ref() == b);
    if !same {
        return Err(Error::ChannelMismatch {
            expected: expected.iter().map(|s| s.as_ref().to_string()).collect(),
            found: series.names().to_vec(),
        });
    }
    Ok(())
}

/// Forecasts every batch after the first. `series` must already be
/// normalized with the training statistics. The model is cloned, so
/// repeated calls give identical results.
pub fn run_forecast<S: AsRef<str>>(
    model: &LstmModel,
    channels: &[S],
    series: &TimeSeries,
    w: usize,
) -> Result<ForecastResult> {
    check_channels(channels, series)?;
    if w == 0 {
        return Err(Error::InvalidParam("batch length w must be ≥ 1".into()));
    }
    if series.len() < 2 * w {
        return Err(Error::TooShort {
            required: 2 * w,
            actual: series.len(),
        });
    }
    let mut model = model.clone();
    model.reset_state();
    let m = series.width();
    let batches = make_batches(series, w)?;
    let mut predicted = vec![f64::NAN; series.len() * m];
    for pair in batches.windows(2) {
        let out = model.forward(&pair[0].values)?;
        let start = pair[1].offset() * m;
        predicted[start..start + w * m].copy_from_slice(&out);
    }
    Ok(ForecastResult {
        predicted: TimeSeries::from_flat(series.names().to_vec(), predicted, series.dt())?,
        valid_from: w,
        valid_to: batches.len() * w,
    })
}
