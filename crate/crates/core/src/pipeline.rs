//! End-to-end detector: fit on a normal trace, score test traces, and the
//! batch-length / dropout study grid.
//!
//! Fitting selects the configured channels, standardizes them with
//! statistics of the whole normal trace, trains the forecaster on the
//! leading part and sets the threshold from the smoothed error on the held
//! out tail. The tail starts on a batch boundary.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{apply_norm, fit_norm, NormStats, TimeSeries};
use crate::detect::{error_series, fit_threshold, ema_smooth, DetectorConfig, ErrorSeries, DEFAULT_QUANTILE};
use crate::error::{Error, Result};
use crate::evaluate::{
    max_score, pca_fit, pca_score, sweep_thresholds, threshold_grid, EvalReport, EvalRow, PcaDetector, TraceScores,
};
use crate::forecast::run_forecast;
use crate::ghl_sim::{LabeledTrace, CHANNELS};
use crate::neural::{train, LstmModel, TrainConfig};
use crate::rng;

pub const ARTIFACT_FORMAT: &str = "ghlfd-lstm-detector";
pub const ARTIFACT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub channels: Vec<String>,
    pub train: TrainConfig,
    pub quantile: f64,
    /// Defaults to twice the batch length.
    pub halflife: Option<f64>,
    pub holdout_fraction: f64,
    /// Defaults to the batch length.
    pub interval_length: Option<usize>,
    pub grid_size: usize,
    pub pca_variance: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            channels: CHANNELS.iter().map(|s| s.to_string()).collect(),
            train: TrainConfig::default(),
            quantile: DEFAULT_QUANTILE,
            halflife: None,
            holdout_fraction: 0.2,
            interval_length: None,
            grid_size: 200,
            pca_variance: 0.95,
        }
    }
}

impl PipelineConfig {
    pub fn window(&self) -> usize {
        self.train.window
    }

    pub fn halflife(&self) -> f64 {
        self.halflife.unwrap_or(2.0 * self.window() as f64)
    }

    pub fn interval_length(&self) -> usize {
        self.interval_length.unwrap_or(self.window())
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.channels.is_empty() {
            return Err(Error::InvalidParam("no channels selected".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(Error::InvalidParam("holdout fraction must lie in (0, 1)".into()));
        }
        if self.interval_length == Some(0) || self.grid_size == 0 {
            return Err(Error::InvalidParam("interval length and grid size must be ≥ 1".into()));
        }
        DetectorConfig {
            threshold: 0.0,
            quantile_q: self.quantile,
            halflife: self.halflife(),
        }
        .validate()
    }

    /// Shortest normal trace that still leaves enough held-out points for a
    /// fitted threshold.
    pub fn min_train_len(&self) -> usize {
        let w = self.window();
        let tail = (crate::detect::MIN_THRESHOLD_POINTS as f64 / self.holdout_fraction).ceil() as usize;
        (2 * w).max(tail + w)
    }
}

/// Serialized trained detector: model weights, normalization and threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedDetector {
    pub format: String,
    pub version: u32,
    pub channels: Vec<String>,
    pub window: usize,
    pub hidden_sizes: (usize, usize),
    pub dropout_p: f64,
    pub norm: NormStats,
    pub detector: DetectorConfig,
    pub interval_length: usize,
    pub model: LstmModel,
    pub loss_history: Vec<f64>,
    /// Mean unsmoothed error over the held-out normal tail, absent when the
    /// normal trace was too short to hold any out.
    pub holdout_mse: Option<f64>,
}

impl TrainedDetector {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string(self).expect("detector serializes");
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bad = |detail: String| Error::Format {
            path: path.to_path_buf(),
            what: "model artifact",
            detail,
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let det: TrainedDetector = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
        if det.format != ARTIFACT_FORMAT {
            return Err(bad(format!("unexpected format tag {:?}", det.format)));
        }
        if det.version != ARTIFACT_VERSION {
            return Err(bad(format!("unsupported version {}", det.version)));
        }
        det.model.validate()?;
        if det.model.channels() != det.channels.len()
            || det.norm.mean.len() != det.channels.len()
            || det.model.hidden_sizes() != det.hidden_sizes
        {
            return Err(bad("tensor shapes disagree with the header".into()));
        }
        Ok(det)
    }

    /// Smoothed and raw forecast error of a raw (unnormalized) series.
    pub fn score(&self, series: &TimeSeries) -> Result<ErrorSeries> {
        let sel = select_channels(series, &self.channels)?;
        let z = apply_norm(&sel, &self.norm)?;
        let fc = run_forecast(&self.model, &self.channels, &z, self.window)?;
        error_series(&z, &fc, self.detector.halflife)
    }

    pub fn trace_scores(&self, name: &str, trace: &LabeledTrace) -> Result<TraceScores> {
        let errors = self.score(&trace.series)?;
        Ok(TraceScores {
            name: name.to_string(),
            danger: trace.danger[errors.valid_range()].to_vec(),
            scores: errors.smoothed,
        })
    }
}

/// Like [`TimeSeries::select`], but a missing channel is reported as a
/// mismatch against the model's channel list.
pub fn select_channels(series: &TimeSeries, channels: &[String]) -> Result<TimeSeries> {
    if channels.iter().any(|c| series.channel_index(c).is_none()) {
        return Err(Error::ChannelMismatch {
            expected: channels.to_vec(),
            found: series.names().to_vec(),
        });
    }
    series.select(channels)
}

fn holdout_start(len: usize, w: usize, fraction: f64) -> usize {
    let head = (len as f64 * (1.0 - fraction)).floor() as usize;
    (head / w) * w
}

/// Result of fitting: the detector and the smoothed errors on the held-out
/// tail used for its threshold. A normal trace shorter than
/// [`PipelineConfig::min_train_len`] but at least two batches long is used
/// entirely for training; the threshold is then left unset (infinite) and
/// `holdout_smoothed` is empty.
#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub detector: TrainedDetector,
    pub holdout_smoothed: Vec<f64>,
}

pub fn fit_detector(normal: &TimeSeries, cfg: &PipelineConfig) -> Result<FitOutcome> {
    cfg.validate()?;
    let w = cfg.window();
    let sel = select_channels(normal, &cfg.channels)?;
    if sel.len() < 2 * w {
        return Err(Error::TooShort {
            required: 2 * w,
            actual: sel.len(),
        });
    }
    let norm = fit_norm(&sel)?;
    let z = apply_norm(&sel, &norm)?;
    // too short for a held-out threshold: train on everything, leave the
    // threshold to the operator
    let minimal = z.len() < cfg.min_train_len();
    let split = if minimal {
        z.len()
    } else {
        holdout_start(z.len(), w, cfg.holdout_fraction)
    };
    let head = z.slice(0, split)?;

    let tc = &cfg.train;
    let mut init = rng::substream(tc.seed, rng::INIT);
    let mut model = LstmModel::new(z.width(), tc.hidden, tc.dropout_p, &mut init)?;
    let report = train(&mut model, &head, tc)?;

    let (threshold, holdout_mse, holdout_smoothed) = if minimal {
        (f64::INFINITY, None, Vec::new())
    } else {
        let fc = run_forecast(&model, &cfg.channels, &z, w)?;
        let errors = error_series(&z, &fc, cfg.halflife())?;
        let tail = split.saturating_sub(errors.valid_from)..errors.len();
        let smoothed = errors.smoothed[tail.clone()].to_vec();
        let raw = &errors.raw[tail];
        let mse = raw.iter().sum::<f64>() / raw.len() as f64;
        (fit_threshold(&smoothed, cfg.quantile)?, Some(mse), smoothed)
    };

    let detector = TrainedDetector {
        format: ARTIFACT_FORMAT.into(),
        version: ARTIFACT_VERSION,
        channels: cfg.channels.clone(),
        window: w,
        hidden_sizes: tc.hidden,
        dropout_p: tc.dropout_p,
        norm,
        detector: DetectorConfig {
            threshold,
            quantile_q: cfg.quantile,
            halflife: cfg.halflife(),
        },
        interval_length: cfg.interval_length(),
        model,
        loss_history: report.loss_history,
        holdout_mse,
    };
    Ok(FitOutcome {
        detector,
        holdout_smoothed,
    })
}

/// Sweep from a fitted threshold up to the largest observed score.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: EvalReport,
    pub at_fitted: EvalRow,
}

impl Evaluation {
    pub fn best(&self) -> &EvalRow {
        self.report.best()
    }
}

pub fn evaluate_scores(traces: &[TraceScores], fitted: f64, interval_length: usize, grid_size: usize) -> Result<Evaluation> {
    let grid = threshold_grid(fitted, max_score(traces), grid_size);
    let report = sweep_thresholds(traces, &grid, interval_length)?;
    let at_fitted = report.rows[0];
    Ok(Evaluation { report, at_fitted })
}

/// PCA residual detector evaluated on the same rows and intervals as the
/// LSTM detector of the same batch length.
#[derive(Debug, Clone)]
pub struct PcaBaseline {
    pub pca: PcaDetector,
    pub channels: Vec<String>,
    pub window: usize,
    pub halflife: f64,
    pub holdout_smoothed: Vec<f64>,
}

impl PcaBaseline {
    pub fn fit(normal: &TimeSeries, cfg: &PipelineConfig) -> Result<Self> {
        cfg.validate()?;
        let w = cfg.window();
        let sel = select_channels(normal, &cfg.channels)?;
        let norm = fit_norm(&sel)?;
        let z = apply_norm(&sel, &norm)?;
        let split = holdout_start(z.len(), w, cfg.holdout_fraction);
        let mut pca = pca_fit(&z.slice(0, split)?, norm, cfg.pca_variance)?;
        let mut baseline = PcaBaseline {
            pca: pca.clone(),
            channels: cfg.channels.clone(),
            window: w,
            halflife: cfg.halflife(),
            holdout_smoothed: Vec::new(),
        };
        let (from, smoothed) = baseline.smoothed(&z)?;
        let holdout = smoothed[split.saturating_sub(from)..].to_vec();
        pca.threshold = fit_threshold(&holdout, cfg.quantile)?;
        baseline.pca = pca;
        baseline.holdout_smoothed = holdout;
        Ok(baseline)
    }

    /// Smoothed Q statistic over the rows the LSTM detector would score.
    fn smoothed(&self, z: &TimeSeries) -> Result<(usize, Vec<f64>)> {
        let w = self.window;
        let end = (z.len() / w) * w;
        if end < 2 * w {
            return Err(Error::TooShort {
                required: 2 * w,
                actual: z.len(),
            });
        }
        let q = pca_score(&self.pca, &z.slice(w, end)?)?;
        Ok((w, ema_smooth(&q, self.halflife)?))
    }

    pub fn trace_scores(&self, name: &str, trace: &LabeledTrace) -> Result<TraceScores> {
        let sel = select_channels(&trace.series, &self.channels)?;
        let z = apply_norm(&sel, &self.pca.norm)?;
        let (from, scores) = self.smoothed(&z)?;
        Ok(TraceScores {
            name: name.to_string(),
            danger: trace.danger[from..from + scores.len()].to_vec(),
            scores,
        })
    }
}

/// One grid cell of the batch-length / dropout study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub window: usize,
    pub dropout_p: f64,
    pub holdout_mse: f64,
    pub fitted_threshold: f64,
    pub at_fitted: EvalRow,
    pub best: EvalRow,
}

/// Trains and evaluates one detector per (w, p) cell. Cells run on up to
/// `jobs` threads; each cell is sequential and seeded, so results do not
/// depend on `jobs`.
pub fn run_study(
    normal: &TimeSeries,
    tests: &[(String, LabeledTrace)],
    base: &PipelineConfig,
    windows: &[usize],
    dropouts: &[f64],
    jobs: usize,
) -> Result<Vec<StudyRow>> {
    if tests.is_empty() {
        return Err(Error::InvalidParam("study needs at least one test trace".into()));
    }
    let cells: Vec<(usize, f64)> = windows
        .iter()
        .flat_map(|&w| dropouts.iter().map(move |&p| (w, p)))
        .collect();
    let run_cell = |&(w, p): &(usize, f64)| -> Result<StudyRow> {
        let mut cfg = base.clone();
        cfg.train.window = w;
        cfg.train.dropout_p = p;
        cfg.halflife = None;
        cfg.interval_length = None;
        let fit = fit_detector(normal, &cfg)?;
        let det = &fit.detector;
        let scores = tests
            .iter()
            .map(|(name, tr)| det.trace_scores(name, tr))
            .collect::<Result<Vec<_>>>()?;
        let eval = evaluate_scores(&scores, det.detector.threshold, det.interval_length, cfg.grid_size)?;
        Ok(StudyRow {
            window: w,
            dropout_p: p,
            holdout_mse: det.holdout_mse.unwrap_or(f64::NAN),
            fitted_threshold: det.detector.threshold,
            at_fitted: eval.at_fitted,
            best: *eval.best(),
        })
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidParam(format!("thread pool: {e}")))?;
    pool.install(|| cells.par_iter().map(run_cell).collect())
}

pub fn study_table(rows: &[StudyRow]) -> String {
    let mut out = format!(
        "{:>5} {:>6} {:>8} {:>10} {:>9} {:>7} {:>7} {:>9} {:>7} {:>7}\n",
        "w", "p", "MSE", "threshold", "precision", "recall", "F1", "best_P", "best_R", "best_F1"
    );
    for r in rows {
        out.push_str(&format!(
            "{:>5} {:>6} {:>8.4} {:>10.5} {:>9.3} {:>7.3} {:>7.3} {:>9.3} {:>7.3} {:>7.3}\n",
            r.window,
            r.dropout_p,
            r.holdout_mse,
            r.fitted_threshold,
            r.at_fitted.precision,
            r.at_fitted.recall,
            r.at_fitted.f1,
            r.best.precision,
            r.best.recall,
            r.best.f1
        ));
    }
    out
}

pub fn write_study_csv(path: impl AsRef<Path>, rows: &[StudyRow]) -> Result<()> {
    let path = path.as_ref();
    let mut out = String::from(
        "w,p,mse,fitted_threshold,precision,recall,f1,best_threshold,best_precision,best_recall,best_f1\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            r.window,
            r.dropout_p,
            r.holdout_mse,
            r.fitted_threshold,
            r.at_fitted.precision,
            r.at_fitted.recall,
            r.at_fitted.f1,
            r.best.threshold,
            r.best.precision,
            r.best.recall,
            r.best.f1
        ));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wave(n: usize) -> TimeSeries {
        let rows = (0..n)
            .map(|t| {
                let a = t as f64 * 0.3;
                vec![a.sin(), a.cos(), 0.1 * (2.0 * a).sin()]
            })
            .collect();
        TimeSeries::new(vec!["x".into(), "y".into(), "z".into()], rows, 1.0).unwrap()
    }

    fn tiny(w: usize) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            channels: vec!["x".into(), "y".into(), "z".into()],
            ..PipelineConfig::default()
        };
        cfg.train.window = w;
        cfg.train.hidden = (3, 3);
        cfg.train.epochs = 2;
        cfg.train.seed = 1;
        cfg
    }

    #[test]
    fn two_batches_train_without_a_threshold() {
        let cfg = tiny(5);
        let fit = fit_detector(&wave(10), &cfg).unwrap();
        assert_eq!(fit.detector.detector.threshold, f64::INFINITY);
        assert!(fit.detector.holdout_mse.is_none());
        assert!(fit.holdout_smoothed.is_empty());
        match fit_detector(&wave(9), &cfg) {
            Err(Error::TooShort { required, actual }) => assert_eq!((required, actual), (10, 9)),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn holdout_threshold_when_long_enough() {
        let cfg = tiny(5);
        let n = cfg.min_train_len();
        let fit = fit_detector(&wave(n), &cfg).unwrap();
        assert!(fit.detector.detector.threshold.is_finite());
        assert!(fit.holdout_smoothed.len() >= crate::detect::MIN_THRESHOLD_POINTS);
    }

    #[test]
    fn artifact_round_trip_and_version_check() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.json");
        let det = fit_detector(&wave(40), &tiny(5)).unwrap().detector;
        det.save(&path).unwrap();
        assert_eq!(TrainedDetector::load(&path).unwrap(), det);

        let text = std::fs::read_to_string(&path).unwrap().replace("\"version\":1", "\"version\":99");
        std::fs::write(&path, text).unwrap();
        assert!(matches!(TrainedDetector::load(&path), Err(Error::Format { .. })));
    }

    #[test]
    fn scoring_needs_the_training_channels() {
        let det = fit_detector(&wave(40), &tiny(5)).unwrap().detector;
        let other = wave(40).select(&["x", "y"]).unwrap();
        assert!(matches!(det.score(&other), Err(Error::ChannelMismatch { .. })));
    }
}
