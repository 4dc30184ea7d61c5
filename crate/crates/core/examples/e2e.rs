//! Fits the detector on a simulated normal run and scores attacked runs.
//!
//! `cargo run --release --example e2e -- [w] [p] [hidden] [epochs] [decimate] [interval]`

use std::time::Instant;

use ghlfd::ghl_sim::{simulate, AttackKind, AttackSweep, PlantParams};
use ghlfd::pipeline::{evaluate_scores, fit_detector, PcaBaseline, PipelineConfig};

fn main() -> ghlfd::Result<()> {
    let args: Vec<String> = std::env::args().collect();
    let arg = |i: usize, d: f64| args.get(i).and_then(|s| s.parse().ok()).unwrap_or(d);
    let w = arg(1, 120.0) as usize;
    let p = arg(2, 0.1);
    let hidden = arg(3, 32.0) as usize;
    let epochs = arg(4, 30.0) as usize;
    let decimate = arg(5, 10.0) as usize;

    let params = PlantParams::default();
    let normal = simulate(&params, 200_000.0, None, 1)?.decimate(decimate)?;
    let sweep = AttackSweep {
        kind: AttackKind::MaxRtLevel,
        count: 10,
        horizon: 60_000.0,
        start_range: (20_000.0, 40_000.0),
        value_range: (90.0, 120.0),
        base_seed: 100,
    };
    let tests = sweep.simulate(&params)?;

    let mut cfg = PipelineConfig::default();
    cfg.train.window = w;
    cfg.train.dropout_p = p;
    cfg.train.hidden = (hidden, hidden);
    cfg.train.epochs = epochs;
    cfg.train.seed = 7;
    cfg.interval_length = args.get(6).and_then(|s| s.parse().ok());

    let t0 = Instant::now();
    let fit = fit_detector(&normal.series, &cfg)?;
    let det = &fit.detector;
    println!("trained in {:.1?}; loss {:?}", t0.elapsed(), det.loss_history);
    println!("threshold {} holdout mse {:?}", det.detector.threshold, det.holdout_mse);

    let mut scores = Vec::new();
    let mut pca_scores = Vec::new();
    let pca = PcaBaseline::fit(&normal.series, &cfg)?;
    for (seed, spec, tr) in &tests {
        let tr = tr.decimate(decimate)?;
        let name = format!("attack_{seed}");
        let s = det.trace_scores(&name, &tr)?;
        let first_danger = s.danger.iter().position(|&d| d);
        let first_alarm = s.scores.iter().position(|&e| e > det.detector.threshold);
        println!("{name}: {spec:?} danger at {first_danger:?}, first alarm at {first_alarm:?}");
        scores.push(s);
        pca_scores.push(pca.trace_scores(&name, &tr)?);
    }
    let eval = evaluate_scores(&scores, det.detector.threshold, det.interval_length, cfg.grid_size)?;
    println!("LSTM at fitted: {:?}", eval.at_fitted);
    println!("LSTM best: {:?}", eval.best());
    let pe = evaluate_scores(&pca_scores, pca.pca.threshold, det.interval_length, cfg.grid_size)?;
    println!("PCA k={} at fitted: {:?}", pca.pca.k(), pe.at_fitted);
    println!("PCA best: {:?}", pe.best());
    Ok(())
}
