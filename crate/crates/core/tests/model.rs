mod common;

use common::sine_series;
use ghlfd::dataio::TimeSeries;
use ghlfd::detect::{error_series, fit_threshold};
use ghlfd::forecast::run_forecast;
use ghlfd::neural::{train, LstmModel, TrainConfig};
use ghlfd::rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Model whose cell forgets everything each step and has no recurrent
/// weights, so each output depends on the current input only.
fn memoryless(m: usize, seed: u64) -> LstmModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut model = LstmModel::new(m, (5, 5), 0.0, &mut rng).unwrap();
    for layer in [&mut model.layer1, &mut model.layer2] {
        let h = layer.hidden;
        layer.u.iter_mut().for_each(|v| *v = 0.0);
        layer.b[h..2 * h].iter_mut().for_each(|v| *v = -50.0);
    }
    model
}

fn random_series(rng: &mut ChaCha8Rng, n: usize, m: usize) -> TimeSeries {
    let rows = (0..n).map(|_| common::random_vec(rng, m, 2.0)).collect();
    let names = (0..m).map(|j| format!("c{j}")).collect();
    TimeSeries::new(names, rows, 1.0).unwrap()
}

#[test]
fn memoryless_forecast_shifts_with_its_input() {
    let (m, w) = (3, 7);
    let model = memoryless(m, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let series = random_series(&mut rng, 10 * w, m);
    let names = series.names().to_vec();
    let full = run_forecast(&model, &names, &series, w).unwrap();
    let shifted = run_forecast(&model, &names, &series.slice(w, series.len()).unwrap(), w).unwrap();
    for t in shifted.valid_range() {
        for (a, b) in shifted.predicted.row(t).iter().zip(full.predicted.row(t + w)) {
            assert!((a - b).abs() < 1e-12, "row {t}: {a} vs {b}");
        }
    }
}

#[test]
fn forecast_rows_outside_the_valid_range_are_unset() {
    let (m, w) = (2, 4);
    let model = memoryless(m, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let series = random_series(&mut rng, 4 * w + 3, m);
    let fc = run_forecast(&model, series.names(), &series, w).unwrap();
    assert_eq!(fc.valid_range(), w..4 * w);
    for t in 0..series.len() {
        let defined = fc.predicted.row(t).iter().all(|v| v.is_finite());
        assert_eq!(defined, fc.valid_range().contains(&t), "row {t}");
    }
}

#[test]
fn dropout_is_unbiased_on_average() {
    let m = 2;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut model = LstmModel::new(m, (6, 6), 0.3, &mut rng).unwrap();
    // near-linear regime for the second layer
    model.layer2.w.iter_mut().for_each(|v| *v *= 1e-2);
    model.output_w.iter_mut().for_each(|v| *v *= 50.0);
    let input = [0.8, -0.4];
    model.reset_state();
    let reference = model.forward(&input).unwrap();

    let trials = 10_000;
    let mut sum = vec![0.0; m];
    let mut sq = vec![0.0; m];
    let mut masks = rng::substream(3, rng::DROPOUT);
    for _ in 0..trials {
        model.reset_state();
        let (out, _) = model.forward_train(&input, &mut masks).unwrap();
        for k in 0..m {
            sum[k] += out[k];
            sq[k] += out[k] * out[k];
        }
    }
    for k in 0..m {
        let mean = sum[k] / trials as f64;
        let var = sq[k] / trials as f64 - mean * mean;
        let se = (var / trials as f64).sqrt();
        assert!(var > 0.0);
        assert!(
            (mean - reference[k]).abs() < 3.0 * se,
            "output {k}: mean {mean} vs {} (se {se})",
            reference[k]
        );
    }
}

#[test]
fn learns_a_periodic_signal() {
    let series = sine_series(1000, 25.0);
    let cfg = TrainConfig {
        window: 10,
        hidden: (8, 8),
        learning_rate: 1e-2,
        epochs: 200,
        dropout_p: 0.0,
        patience: 200,
        seed: 3,
        ..TrainConfig::default()
    };
    let mut init = rng::substream(cfg.seed, rng::INIT);
    let mut model = LstmModel::new(2, cfg.hidden, 0.0, &mut init).unwrap();
    let report = train(&mut model, &series, &cfg).unwrap();
    let best = report.loss_history.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(best < 1e-3, "best epoch loss {best}");

    let fc = run_forecast(&model, series.names(), &series, cfg.window).unwrap();
    let mut abs = 0.0;
    let mut count = 0;
    for t in fc.valid_range() {
        for (a, b) in fc.predicted.row(t).iter().zip(series.row(t)) {
            abs += (a - b).abs();
            count += 1;
        }
    }
    assert!(abs / (count as f64) < 0.1, "mean |error| {}", abs / count as f64);
}

#[test]
fn threshold_keeps_alarm_rate_on_its_own_sample() {
    // smoothed errors of a memoryless model on noise stand in for a holdout
    let (m, w) = (3, 10);
    let model = memoryless(m, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let series = random_series(&mut rng, 300 * w, m);
    let fc = run_forecast(&model, series.names(), &series, w).unwrap();
    let errors = error_series(&series, &fc, 2.0 * w as f64).unwrap();
    let thr = fit_threshold(&errors.smoothed, 0.999).unwrap();
    let n = errors.smoothed.len() as f64;
    let rate = errors.smoothed.iter().filter(|&&e| e > thr).count() as f64 / n;
    assert!(rate <= 0.001 + 2.0 / n.sqrt());
}
