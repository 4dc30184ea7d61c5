//! Command-line front end: `simulate`, `train`, `detect`, `eval`, `study`.
//!
//! Settings resolve as built-in defaults, then a `key = value` file given
//! with `--config`, then flags. The resolved values are written to
//! `effective.conf` in every output directory.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataio::{read_csv, write_csv};
use crate::detect::{decide, write_error_csv};
use crate::error::{Error, Result};
use crate::evaluate::EvalReport;
use crate::ghl_sim::{parse_kv, simulate, AttackKind, AttackSpec, AttackSweep, LabeledTrace, PlantParams};
use crate::pipeline::{
    evaluate_scores, fit_detector, run_study, study_table, write_study_csv, Evaluation, PcaBaseline,
    PipelineConfig, TrainedDetector,
};

#[derive(Debug, Parser)]
#[command(name = "ghlfd", version, about = "LSTM forecast-residual fault detection for the gasoil heating loop")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate normal and attacked plant traces as CSV.
    Simulate(SimulateArgs),
    /// Fit the forecaster and its threshold on a normal trace.
    Train(TrainArgs),
    /// Write smoothed errors and decisions for each input trace.
    Detect(DetectArgs),
    /// Score labelled traces and sweep the threshold.
    Eval(EvalArgs),
    /// Train and evaluate over a grid of batch lengths and dropout rates.
    Study(StudyArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// `key = value` settings file; flags take precedence.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Output directory (created if its parent exists).
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Write one attack-free trace.
    #[arg(long)]
    pub normal: bool,
    /// Attack kind: max-rt-level, max-ht-temp, pump-freq or relax-time.
    #[arg(long)]
    pub attack: Option<String>,
    /// Number of attacked traces.
    #[arg(long)]
    pub count: Option<usize>,
    /// Recorded seconds per trace.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Keep every k-th sample.
    #[arg(long)]
    pub decimate: Option<usize>,
    #[arg(long)]
    pub start_min: Option<f64>,
    #[arg(long)]
    pub start_max: Option<f64>,
    #[arg(long)]
    pub value_min: Option<f64>,
    #[arg(long)]
    pub value_max: Option<f64>,
    /// Regenerate exactly the traces listed in a previous manifest.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["normal", "attack"])]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelOpts {
    /// Batch length in samples.
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Hidden widths, `h` or `h1,h2`.
    #[arg(long)]
    pub hidden: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub quantile: Option<f64>,
    /// EMA half-life in samples (default 2w).
    #[arg(long)]
    pub halflife: Option<f64>,
    /// Comma-separated channel names.
    #[arg(long)]
    pub channels: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelOpts,
    /// Normal training trace.
    pub data: PathBuf,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    /// Overrides the fitted threshold.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long)]
    pub halflife: Option<f64>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_name = "FILE")]
    pub model: PathBuf,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Scoring interval in samples (default: the model's batch length).
    #[arg(long)]
    pub interval: Option<usize>,
    #[arg(long)]
    pub grid_size: Option<usize>,
    /// Normal trace for fitting the PCA baseline alongside.
    #[arg(long, value_name = "FILE")]
    pub pca_normal: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub model: ModelOpts,
    #[arg(long, value_name = "FILE")]
    pub normal: PathBuf,
    /// Comma-separated batch lengths.
    #[arg(long)]
    pub windows: Option<String>,
    /// Comma-separated dropout rates.
    #[arg(long)]
    pub dropouts: Option<String>,
    #[arg(long)]
    pub jobs: Option<usize>,
    #[arg(required = true)]
    pub traces: Vec<PathBuf>,
}

/// A failure with the file or flag it concerns.
#[derive(Debug)]
pub struct Failure {
    pub message: String,
    pub code: i32,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure {
            message: message.into(),
            code: 1,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: e.exit_code(),
            message: e.to_string(),
        }
    }
}

type CliResult<T> = std::result::Result<T, Failure>;

trait Context<T> {
    fn context(self, what: impl Display) -> CliResult<T>;
}

impl<T> Context<T> for Result<T> {
    fn context(self, what: impl Display) -> CliResult<T> {
        self.map_err(|e| Failure {
            code: e.exit_code(),
            message: format!("{what}: {e}"),
        })
    }
}

const PIPELINE_KEYS: &[&str] = &[
    "w",
    "dropout",
    "hidden",
    "epochs",
    "learning_rate",
    "rmsprop_decay",
    "rmsprop_epsilon",
    "tbptt",
    "clip_norm",
    "patience",
    "min_delta",
    "seed",
    "channels",
    "quantile",
    "halflife",
    "holdout_fraction",
    "interval_length",
    "grid_size",
    "pca_variance",
];

const RUN_KEYS: &[&str] = &[
    "threshold",
    "jobs",
    "windows",
    "dropouts",
    "attack",
    "count",
    "horizon",
    "decimate",
    "start_min",
    "start_max",
    "value_min",
    "value_max",
];

/// Merged settings with the origin of each value.
#[derive(Debug, Default)]
struct Settings {
    values: BTreeMap<String, (String, &'static str)>,
}

impl Settings {
    fn load(config: Option<&Path>) -> CliResult<Self> {
        let mut s = Settings::default();
        let Some(path) = config else {
            return Ok(s);
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let map = parse_kv(&text).context(path.display())?;
        let plant_keys = PlantParams::default().to_kv_map();
        for (k, v) in map {
            let key = k.replace('-', "_");
            if !PIPELINE_KEYS.contains(&key.as_str()) && !RUN_KEYS.contains(&key.as_str()) && !plant_keys.contains_key(&key) {
                return Err(Failure::usage(format!("{}: unknown setting {k:?}", path.display())));
            }
            s.values.insert(key, (v, "config"));
        }
        Ok(s)
    }

    fn flag<T: ToString>(&mut self, key: &str, value: Option<T>) {
        if let Some(v) = value {
            self.values.insert(key.to_string(), (v.to_string(), "flag"));
        }
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|(v, _)| v.as_str())
    }

    fn get<T: FromStr>(&self, key: &str) -> CliResult<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((v, origin)) => v.trim().parse().map(Some).map_err(|_| {
                let place = if *origin == "flag" {
                    format!("--{}", key.replace('_', "-"))
                } else {
                    format!("config key {key}")
                };
                Failure::usage(format!("{place}: cannot parse {v:?}"))
            }),
        }
    }

    fn list<T: FromStr>(&self, key: &str) -> CliResult<Option<Vec<T>>> {
        let Some(raw) = self.raw(key) else {
            return Ok(None);
        };
        raw.split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| Failure::usage(format!("{key}: cannot parse {p:?}")))
            })
            .collect::<CliResult<Vec<T>>>()
            .map(Some)
    }

    fn plant_params(&self) -> CliResult<PlantParams> {
        let defaults = PlantParams::default().to_kv_map();
        let mut map: BTreeMap<String, String> = self
            .values
            .iter()
            .filter(|(k, _)| defaults.contains_key(*k))
            .map(|(k, (v, _))| (k.clone(), v.clone()))
            .collect();
        Ok(PlantParams::default().with_overrides(&mut map)?)
    }

    fn pipeline(&self) -> CliResult<PipelineConfig> {
        let mut cfg = PipelineConfig::default();
        let t = &mut cfg.train;
        if let Some(v) = self.get("w")? {
            t.window = v;
        }
        if let Some(v) = self.get("dropout")? {
            t.dropout_p = v;
        }
        if let Some(v) = self.list::<usize>("hidden")? {
            t.hidden = match v[..] {
                [h] => (h, h),
                [h1, h2] => (h1, h2),
                _ => return Err(Failure::usage("hidden: expected `h` or `h1,h2`")),
            };
        }
        if let Some(v) = self.get("epochs")? {
            t.epochs = v;
        }
        if let Some(v) = self.get("learning_rate")? {
            t.learning_rate = v;
        }
        if let Some(v) = self.get("rmsprop_decay")? {
            t.rmsprop_decay = v;
        }
        if let Some(v) = self.get("rmsprop_epsilon")? {
            t.rmsprop_epsilon = v;
        }
        if let Some(v) = self.get("tbptt")? {
            t.tbptt_length = Some(v);
        }
        if let Some(v) = self.get("clip_norm")? {
            t.gradient_clip_norm = v;
        }
        if let Some(v) = self.get("patience")? {
            t.patience = v;
        }
        if let Some(v) = self.get("min_delta")? {
            t.min_delta = v;
        }
        if let Some(v) = self.get("seed")? {
            t.seed = v;
        }
        if let Some(v) = self.list::<String>("channels")? {
            cfg.channels = v;
        }
        if let Some(v) = self.get("quantile")? {
            cfg.quantile = v;
        }
        cfg.halflife = self.get("halflife")?;
        if let Some(v) = self.get("holdout_fraction")? {
            cfg.holdout_fraction = v;
        }
        cfg.interval_length = self.get("interval_length")?;
        if let Some(v) = self.get("grid_size")? {
            cfg.grid_size = v;
        }
        if let Some(v) = self.get("pca_variance")? {
            cfg.pca_variance = v;
        }
        cfg.validate().context("settings")?;
        Ok(cfg)
    }

    fn require_seed(&self) -> CliResult<u64> {
        self.get("seed")?
            .ok_or_else(|| Failure::usage("a seed is required: pass --seed or set `seed` in the config file"))
    }
}

fn pipeline_kv(cfg: &PipelineConfig) -> Vec<(String, String)> {
    let t = &cfg.train;
    vec![
        ("w".into(), t.window.to_string()),
        ("dropout".into(), t.dropout_p.to_string()),
        ("hidden".into(), format!("{},{}", t.hidden.0, t.hidden.1)),
        ("epochs".into(), t.epochs.to_string()),
        ("learning_rate".into(), t.learning_rate.to_string()),
        ("rmsprop_decay".into(), t.rmsprop_decay.to_string()),
        ("rmsprop_epsilon".into(), t.rmsprop_epsilon.to_string()),
        ("tbptt".into(), t.tbptt().to_string()),
        ("clip_norm".into(), t.gradient_clip_norm.to_string()),
        ("patience".into(), t.patience.to_string()),
        ("min_delta".into(), t.min_delta.to_string()),
        ("seed".into(), t.seed.to_string()),
        ("channels".into(), cfg.channels.join(",")),
        ("quantile".into(), cfg.quantile.to_string()),
        ("halflife".into(), cfg.halflife().to_string()),
        ("holdout_fraction".into(), cfg.holdout_fraction.to_string()),
        ("interval_length".into(), cfg.interval_length().to_string()),
        ("grid_size".into(), cfg.grid_size.to_string()),
        ("pca_variance".into(), cfg.pca_variance.to_string()),
    ]
}

fn prepare_out(dir: &Path) -> CliResult<()> {
    if dir.is_dir() {
        return Ok(());
    }
    std::fs::create_dir(dir).map_err(|e| Error::io(dir, e).into())
}

fn echo(dir: &Path, command: &str, entries: &[(String, String)]) -> CliResult<()> {
    let mut text = format!("# effective settings for `ghlfd {command}`\n");
    for (k, v) in entries {
        text.push_str(&format!("{k} = {v}\n"));
    }
    let path = dir.join("effective.conf");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e).into())
}

fn read_trace(path: &Path, channels: &[String]) -> CliResult<LabeledTrace> {
    let raw = read_csv(path, None::<&[&str]>)?;
    LabeledTrace::from_series(&raw, channels).context(path.display())
}

fn trace_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

fn pool(jobs: usize) -> CliResult<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Failure::usage(format!("--jobs: {e}")))
}

/// Runs of a simulate invocation, enough to regenerate them bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub plant: PlantParams,
    pub horizon: f64,
    pub decimate: usize,
    pub runs: Vec<ManifestRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRun {
    pub file: String,
    pub seed: u64,
    pub attack: Option<AttackSpec>,
}

fn write_runs(dir: &Path, manifest: &Manifest) -> CliResult<()> {
    for run in &manifest.runs {
        let trace = simulate(&manifest.plant, manifest.horizon, run.attack.as_ref(), run.seed)?.decimate(manifest.decimate)?;
        write_csv(dir.join(&run.file), &trace.to_series())?;
        eprintln!("wrote {} ({} rows)", run.file, trace.len());
    }
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e).into())
}

fn cmd_simulate(a: SimulateArgs) -> CliResult<()> {
    let out = &a.common.out;
    if let Some(path) = &a.manifest {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.clone(),
            what: "manifest",
            detail: e.to_string(),
        })?;
        manifest.plant.validate().context(path.display())?;
        prepare_out(out)?;
        write_runs(out, &manifest)?;
        let mut entries = vec![("manifest".to_string(), path.display().to_string())];
        entries.extend(manifest.plant.to_kv_map());
        return echo(out, "simulate", &entries);
    }

    let mut s = Settings::load(a.common.config.as_deref())?;
    s.flag("seed", a.seed);
    s.flag("attack", a.attack.clone());
    s.flag("count", a.count);
    s.flag("horizon", a.horizon);
    s.flag("decimate", a.decimate);
    s.flag("start_min", a.start_min);
    s.flag("start_max", a.start_max);
    s.flag("value_min", a.value_min);
    s.flag("value_max", a.value_max);

    let seed = s.require_seed()?;
    let plant = s.plant_params()?;
    let horizon: f64 = s.get("horizon")?.unwrap_or(200_000.0);
    let decimate: usize = s.get("decimate")?.unwrap_or(1);
    if decimate == 0 {
        return Err(Failure::usage("--decimate must be ≥ 1"));
    }
    let attack: Option<AttackKind> = s.raw("attack").map(str::parse).transpose().map_err(Failure::from)?;
    if !a.normal && attack.is_none() {
        return Err(Failure::usage("nothing to simulate: pass --normal and/or --attack KIND"));
    }

    let mut runs = Vec::new();
    let mut entries = vec![
        ("seed".to_string(), seed.to_string()),
        ("horizon".to_string(), horizon.to_string()),
        ("decimate".to_string(), decimate.to_string()),
    ];
    if a.normal {
        runs.push(ManifestRun {
            file: "normal.csv".into(),
            seed,
            attack: None,
        });
    }
    if let Some(kind) = attack {
        let nominal = kind.nominal(&plant);
        let sweep = AttackSweep {
            kind,
            count: s.get("count")?.unwrap_or(10),
            horizon,
            start_range: (
                s.get("start_min")?.unwrap_or(horizon / 3.0),
                s.get("start_max")?.unwrap_or(2.0 * horizon / 3.0),
            ),
            value_range: (
                s.get("value_min")?.unwrap_or(1.1 * nominal),
                s.get("value_max")?.unwrap_or(1.5 * nominal),
            ),
            base_seed: seed,
        };
        entries.extend([
            ("attack".to_string(), kind.to_string()),
            ("count".to_string(), sweep.count.to_string()),
            ("start_min".to_string(), sweep.start_range.0.to_string()),
            ("start_max".to_string(), sweep.start_range.1.to_string()),
            ("value_min".to_string(), sweep.value_range.0.to_string()),
            ("value_max".to_string(), sweep.value_range.1.to_string()),
        ]);
        for (k, (run_seed, spec)) in sweep.runs().into_iter().enumerate() {
            runs.push(ManifestRun {
                file: format!("attack_{kind}_{:03}.csv", k + 1),
                seed: run_seed,
                attack: Some(spec),
            });
        }
    }
    entries.extend(plant.to_kv_map());
    let manifest = Manifest {
        plant,
        horizon,
        decimate,
        runs,
    };
    prepare_out(out)?;
    write_runs(out, &manifest)?;
    echo(out, "simulate", &entries)
}

fn model_settings(common: &Common, m: &ModelOpts) -> CliResult<Settings> {
    let mut s = Settings::load(common.config.as_deref())?;
    s.flag("w", m.w);
    s.flag("dropout", m.dropout);
    s.flag("hidden", m.hidden.clone());
    s.flag("epochs", m.epochs);
    s.flag("learning_rate", m.learning_rate);
    s.flag("quantile", m.quantile);
    s.flag("halflife", m.halflife);
    s.flag("channels", m.channels.clone());
    s.flag("seed", m.seed);
    Ok(s)
}

fn cmd_train(a: TrainArgs) -> CliResult<()> {
    let s = model_settings(&a.common, &a.model)?;
    s.require_seed()?;
    let cfg = s.pipeline()?;
    let data = read_csv(&a.data, None::<&[&str]>)?;
    let fit = fit_detector(&data, &cfg).context(a.data.display())?;
    let det = &fit.detector;
    let out = &a.common.out;
    prepare_out(out)?;
    det.save(out.join("model.json"))?;
    let mut loss = String::from("epoch,loss\n");
    for (i, l) in det.loss_history.iter().enumerate() {
        loss.push_str(&format!("{},{l}\n", i + 1));
    }
    let loss_path = out.join("loss.csv");
    std::fs::write(&loss_path, loss).map_err(|e| Error::io(&loss_path, e))?;
    echo(out, "train", &pipeline_kv(&cfg))?;

    println!(
        "trained on {} rows, {} epochs, {} parameters",
        data.len(),
        det.loss_history.len(),
        det.model.parameter_count()
    );
    match det.holdout_mse {
        Some(mse) => println!("held-out mse {mse:.6}, threshold {:.6}", det.detector.threshold),
        None => eprintln!(
            "warning: {} has {} rows; {} are needed for a held-out threshold. \
             The model has no threshold; pass --threshold to detect and eval.",
            a.data.display(),
            data.len(),
            cfg.min_train_len()
        ),
    }
    Ok(())
}

fn operating_threshold(det: &TrainedDetector, flag: Option<f64>) -> CliResult<f64> {
    let t = flag.unwrap_or(det.detector.threshold);
    if !t.is_finite() {
        return Err(Failure::usage("the model has no fitted threshold; pass --threshold"));
    }
    if t < 0.0 {
        return Err(Failure::usage("--threshold must be ≥ 0"));
    }
    Ok(t)
}

fn cmd_detect(a: DetectArgs) -> CliResult<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    s.flag("threshold", a.threshold);
    s.flag("halflife", a.halflife);
    s.flag("jobs", a.jobs);
    let mut det = TrainedDetector::load(&a.model)?;
    if let Some(h) = s.get::<f64>("halflife")? {
        det.detector.halflife = h;
        det.detector.validate().context("--halflife")?;
    }
    let threshold = operating_threshold(&det, s.get("threshold")?)?;
    let out = &a.common.out;
    prepare_out(out)?;
    let jobs = s.get("jobs")?.unwrap_or(1);
    let lines = pool(jobs)?.install(|| {
        a.traces
            .par_iter()
            .map(|path| -> CliResult<String> {
                let series = read_csv(path, None::<&[&str]>)?;
                let errors = det.score(&series).context(path.display())?;
                let name = trace_name(path);
                write_error_csv(out.join(format!("{name}_errors.csv")), &errors, threshold, series.dt())?;
                let d = decide(&errors.smoothed, threshold);
                let first = d.iter().position(|&x| x).map(|i| (errors.valid_from + i) as f64 * series.dt());
                Ok(format!(
                    "{name}: {} of {} points above threshold, first at {}",
                    d.iter().filter(|&&x| x).count(),
                    d.len(),
                    first.map_or("-".into(), |t| t.to_string())
                ))
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    for l in lines {
        println!("{l}");
    }
    echo(
        out,
        "detect",
        &[
            ("model".into(), a.model.display().to_string()),
            ("threshold".into(), threshold.to_string()),
            ("halflife".into(), det.detector.halflife.to_string()),
            ("jobs".into(), jobs.to_string()),
        ],
    )
}

fn write_report(out: &Path, prefix: &str, eval: &Evaluation) -> CliResult<String> {
    let report: &EvalReport = &eval.report;
    report.write_csv(out.join(format!("{prefix}report.csv")))?;
    report.write_curve_csv(out.join(format!("{prefix}curve.csv")))?;
    report.write_per_trace_csv(out.join(format!("{prefix}per_trace.csv")), 0)?;
    let f = &eval.at_fitted;
    let b = eval.best();
    Ok(format!(
        "operating threshold {:.6}: P {:.3} R {:.3} F1 {:.3}{}\nbest F1 threshold {:.6}: P {:.3} R {:.3} F1 {:.3}\n",
        f.threshold,
        f.precision,
        f.recall,
        f.f1,
        if f.precision_undefined { " (no alarms)" } else { "" },
        b.threshold,
        b.precision,
        b.recall,
        b.f1
    ))
}

fn cmd_eval(a: EvalArgs) -> CliResult<()> {
    let mut s = Settings::load(a.common.config.as_deref())?;
    s.flag("threshold", a.threshold);
    s.flag("interval_length", a.interval);
    s.flag("grid_size", a.grid_size);
    s.flag("jobs", a.jobs);
    let det = TrainedDetector::load(&a.model)?;
    let threshold = operating_threshold(&det, s.get("threshold")?)?;
    let interval = s.get("interval_length")?.unwrap_or(det.interval_length);
    let grid_size = s.get("grid_size")?.unwrap_or(PipelineConfig::default().grid_size);
    if interval == 0 || grid_size == 0 {
        return Err(Failure::usage("interval length and grid size must be ≥ 1"));
    }
    let jobs = s.get("jobs")?.unwrap_or(1);
    let traces = a
        .traces
        .iter()
        .map(|p| Ok((trace_name(p), read_trace(p, &det.channels)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let scores = pool(jobs)?.install(|| {
        traces
            .par_iter()
            .zip(&a.traces)
            .map(|((name, tr), path)| det.trace_scores(name, tr).context(path.display()))
            .collect::<CliResult<Vec<_>>>()
    })?;
    let eval = evaluate_scores(&scores, threshold, interval, grid_size)?;
    let out = &a.common.out;
    prepare_out(out)?;
    let mut summary = format!("LSTM detector, {} traces, interval {interval}\n", traces.len());
    summary.push_str(&write_report(out, "", &eval)?);

    let mut entries = vec![
        ("model".to_string(), a.model.display().to_string()),
        ("threshold".to_string(), threshold.to_string()),
        ("interval_length".to_string(), interval.to_string()),
        ("grid_size".to_string(), grid_size.to_string()),
    ];
    if let Some(normal_path) = &a.pca_normal {
        let mut cfg = s.pipeline()?;
        cfg.channels = det.channels.clone();
        cfg.train.window = det.window;
        cfg.halflife = Some(det.detector.halflife);
        let normal = read_csv(normal_path, None::<&[&str]>)?;
        let pca = PcaBaseline::fit(&normal, &cfg).context(normal_path.display())?;
        let pscores = traces
            .iter()
            .map(|(name, tr)| pca.trace_scores(name, tr))
            .collect::<Result<Vec<_>>>()?;
        let pe = evaluate_scores(&pscores, pca.pca.threshold, interval, grid_size)?;
        summary.push_str(&format!("\nPCA baseline, {} of {} components\n", pca.pca.k(), pca.channels.len()));
        summary.push_str(&write_report(out, "pca_", &pe)?);
        entries.push(("pca_normal".into(), normal_path.display().to_string()));
        entries.push(("pca_variance".into(), cfg.pca_variance.to_string()));
    }
    print!("{summary}");
    summary.push('\n');
    summary.push_str(&eval.report.to_table());
    let path = out.join("summary.txt");
    std::fs::write(&path, &summary).map_err(|e| Error::io(&path, e))?;
    echo(out, "eval", &entries)
}

fn cmd_study(a: StudyArgs) -> CliResult<()> {
    let mut s = model_settings(&a.common, &a.model)?;
    s.flag("windows", a.windows.clone());
    s.flag("dropouts", a.dropouts.clone());
    s.flag("jobs", a.jobs);
    s.require_seed()?;
    let cfg = s.pipeline()?;
    let windows = s.list::<usize>("windows")?.unwrap_or_else(|| vec![30, 60, 120]);
    let dropouts = s.list::<f64>("dropouts")?.unwrap_or_else(|| vec![0.1, 0.5]);
    let jobs = s.get("jobs")?.unwrap_or(1);
    let normal = read_csv(&a.normal, None::<&[&str]>)?;
    let tests = a
        .traces
        .iter()
        .map(|p| Ok((trace_name(p), read_trace(p, &cfg.channels)?)))
        .collect::<CliResult<Vec<_>>>()?;
    let rows = run_study(&normal, &tests, &cfg, &windows, &dropouts, jobs)?;
    let out = &a.common.out;
    prepare_out(out)?;
    write_study_csv(out.join("study.csv"), &rows)?;
    let table = study_table(&rows);
    let path = out.join("study.txt");
    std::fs::write(&path, &table).map_err(|e| Error::io(&path, e))?;
    print!("{table}");
    let mut entries = pipeline_kv(&cfg);
    entries.retain(|(k, _)| k != "w" && k != "dropout" && k != "halflife" && k != "interval_length");
    entries.push(("windows".into(), windows.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")));
    entries.push(("dropouts".into(), dropouts.iter().map(|p| p.to_string()).collect::<Vec<_>>().join(",")));
    entries.push(("jobs".into(), jobs.to_string()));
    echo(out, "study", &entries)
}

pub fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Study(a) => cmd_study(a),
    }
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code: 0 success, 1 usage, 2 data error, 3 numeric failure.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
