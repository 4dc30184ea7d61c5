//! Helpers shared by the integration tests: finite differences,
//! brute-force reference implementations and the desk-scale scenario.
#![allow(dead_code)]

use ghlfd::dataio::TimeSeries;
use ghlfd::ghl_sim::{simulate, AttackKind, AttackSweep, LabeledTrace, PlantParams};
use ghlfd::neural::{mse_loss, LstmModel, RecurrentState};
use ghlfd::pipeline::PipelineConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Loss of one training-mode pass from `state`, with dropout masks drawn
/// from a fresh generator seeded by `mask_seed`.
pub fn train_loss(model: &LstmModel, state: &RecurrentState, input: &[f64], target: &[f64], mask_seed: u64) -> f64 {
    let mut m = model.clone();
    m.set_state(state.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let (pred, _) = m.forward_train(input, &mut rng).unwrap();
    mse_loss(&pred, target).unwrap().0
}

/// Worst relative error per tensor between backprop and central
/// differences. Entries where both are below `floor` are compared
/// absolutely against it.
pub fn gradient_check(
    model: &LstmModel,
    state: &RecurrentState,
    input: &[f64],
    target: &[f64],
    mask_seed: u64,
    step: f64,
    floor: f64,
) -> [f64; 8] {
    let mut m = model.clone();
    m.set_state(state.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed);
    let (pred, tape) = m.forward_train(input, &mut rng).unwrap();
    let (_, dpred) = mse_loss(&pred, target).unwrap();
    let grads = m.backward(&tape, &dpred, tape.steps()).unwrap();
    let analytic: Vec<Vec<f64>> = grads.tensors().iter().map(|t| t.to_vec()).collect();

    let mut worst = [0.0f64; 8];
    for (ti, tensor) in analytic.iter().enumerate() {
        for (j, &a) in tensor.iter().enumerate() {
            let mut plus = model.clone();
            plus.tensors_mut()[ti][j] += step;
            let mut minus = model.clone();
            minus.tensors_mut()[ti][j] -= step;
            let numeric = (train_loss(&plus, state, input, target, mask_seed)
                - train_loss(&minus, state, input, target, mask_seed))
                / (2.0 * step);
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(floor);
            worst[ti] = worst[ti].max(rel);
        }
    }
    worst
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    use rand::Rng;
    (0..n).map(|_| rng.gen_range(-scale..scale)).collect()
}

pub fn random_state(rng: &mut ChaCha8Rng, h1: usize, h2: usize) -> RecurrentState {
    RecurrentState {
        h1: random_vec(rng, h1, 0.5),
        c1: random_vec(rng, h1, 0.5),
        h2: random_vec(rng, h2, 0.5),
        c2: random_vec(rng, h2, 0.5),
    }
}

pub fn mse_oracle(x: &[f64], y: &[f64], m: usize) -> Vec<f64> {
    let n = x.len() / m;
    let mut out = vec![0.0; n];
    for t in 0..n {
        let mut acc = 0.0;
        for k in 0..m {
            let d = x[t * m + k] - y[t * m + k];
            acc += d * d;
        }
        out[t] = acc / m as f64;
    }
    out
}

/// Closed-form EMA: s_t = λᵗ·x₀ + Σ_{k=1..t} (1 − λ)·λ^{t−k}·x_k.
pub fn ema_oracle(raw: &[f64], halflife: f64) -> Vec<f64> {
    let lambda = 2f64.powf(-1.0 / halflife);
    (0..raw.len())
        .map(|t| {
            let mut s = lambda.powi(t as i32) * raw[0];
            for (k, x) in raw.iter().enumerate().take(t + 1).skip(1) {
                s += (1.0 - lambda) * lambda.powi((t - k) as i32) * x;
            }
            s
        })
        .collect()
}

/// Order statistic of rank `r` (0-based) by counting, without sorting.
fn order_stat(values: &[f64], r: usize) -> f64 {
    for &v in values {
        let below = values.iter().filter(|&&u| u < v).count();
        let equal = values.iter().filter(|&&u| u == v).count();
        if below <= r && r < below + equal {
            return v;
        }
    }
    unreachable!()
}

/// Linear interpolation between order statistics at position (n − 1)·q.
pub fn quantile_oracle(values: &[f64], q: f64) -> f64 {
    let h = (values.len() - 1) as f64 * q;
    let lo = order_stat(values, h.floor() as usize);
    let hi = order_stat(values, h.ceil() as usize);
    lo + (h - h.floor()) * (hi - lo)
}

/// (tp, fp, fn, tn) over whole intervals.
pub fn intervals_oracle(decisions: &[bool], danger: &[bool], len: usize) -> (usize, usize, usize, usize) {
    let mut c = (0, 0, 0, 0);
    let mut start = 0;
    while start + len <= decisions.len() {
        let mut pred = false;
        let mut truth = false;
        for i in start..start + len {
            pred |= decisions[i];
            truth |= danger[i];
        }
        match (pred, truth) {
            (true, true) => c.0 += 1,
            (true, false) => c.1 += 1,
            (false, true) => c.2 += 1,
            (false, false) => c.3 += 1,
        }
        start += len;
    }
    c
}

/// Periodic two-channel series with period `period` samples.
pub fn sine_series(n: usize, period: f64) -> TimeSeries {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|t| {
            let a = 2.0 * std::f64::consts::PI * t as f64 / period;
            vec![a.sin(), (2.0 * a).cos() * 0.5]
        })
        .collect();
    TimeSeries::new(vec!["a".into(), "b".into()], rows, 1.0).unwrap()
}

/// Sampling factor applied to all desk-scale traces.
pub const DECIMATE: usize = 10;

/// One long normal run and ten max-RT-level attacks, decimated.
pub struct Scenario {
    pub normal: TimeSeries,
    pub tests: Vec<(String, LabeledTrace)>,
}

pub fn desk_scenario() -> Scenario {
    let params = PlantParams::default();
    let normal = simulate(&params, 200_000.0, None, 1).unwrap().decimate(DECIMATE).unwrap();
    let sweep = AttackSweep {
        kind: AttackKind::MaxRtLevel,
        count: 10,
        horizon: 60_000.0,
        start_range: (20_000.0, 40_000.0),
        value_range: (90.0, 120.0),
        base_seed: 100,
    };
    let tests = sweep
        .simulate(&params)
        .unwrap()
        .into_iter()
        .map(|(seed, _, tr)| (format!("attack_{seed}"), tr.decimate(DECIMATE).unwrap()))
        .collect();
    Scenario {
        normal: normal.series,
        tests,
    }
}

/// Training budget small enough for a test run.
pub fn desk_config(w: usize, dropout_p: f64) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.train.window = w;
    cfg.train.dropout_p = dropout_p;
    cfg.train.hidden = (32, 32);
    cfg.train.epochs = 20;
    cfg.train.seed = 7;
    cfg
}

mod plant_checks {
    use ghlfd::ghl_sim::{simulate, step, AttackKind, AttackSpec, PlantParams, PlantState, INJ_VALVE_ACT};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const KINDS: [AttackKind; 4] = [
        AttackKind::MaxRtLevel,
        AttackKind::MaxHtTemp,
        AttackKind::PumpFreq,
        AttackKind::RelaxTime,
    ];

    /// Attack of a kind chosen by `seed`, starting in the first half.
    pub fn random_attack(rng: &mut ChaCha8Rng, seed: u64, horizon: f64) -> AttackSpec {
        let kind = KINDS[seed as usize % KINDS.len()];
        let hacked_value = match kind {
            AttackKind::MaxRtLevel => rng.gen_range(85.0..125.0),
            AttackKind::MaxHtTemp => rng.gen_range(65.0..110.0),
            AttackKind::PumpFreq => rng.gen_range(0.02..0.4),
            AttackKind::RelaxTime => rng.gen_range(0.0..2000.0),
        };
        AttackSpec {
            kind,
            start_time: rng.gen_range(0.0..horizon / 2.0),
            hacked_value,
        }
    }

    /// Steps the plant directly so every tank level is visible; odd seeds
    /// run under an attack.
    pub fn check_transfers_and_bounds(seed: u64) -> Result<(), String> {
        let params = PlantParams::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let horizon = 40_000.0;
        let attack = (seed % 2 == 1).then(|| random_attack(&mut rng, seed / 2, horizon));
        let mut state = PlantState::initial(&params);
        let mut factor = 1.0f64;
        for k in 0..horizon as usize {
            factor = (factor + rng.gen_range(-0.001..0.001)).clamp(0.98, 1.02);
            state.fill_factor = factor;
            let next = step(&state, &params, attack.as_ref(), k as f64);
            if state.phase.is_internal_transfer() {
                let (a, b) = (state.total_volume(), next.total_volume());
                if (a - b).abs() > 1e-9 * a.max(1.0) {
                    return Err(format!("seed {seed}, step {k}, {:?}: volume {a} -> {b}", state.phase));
                }
            }
            let bounded = (0.0..=params.rt_capacity).contains(&next.rt_level)
                && (0.0..=params.ht_capacity).contains(&next.ht_level)
                && (0.0..=params.ct_capacity).contains(&next.ct_level)
                && next.rt_temp >= params.ambient_temp
                && next.ht_temp >= params.ambient_temp;
            if !bounded {
                return Err(format!("seed {seed}, step {k}: state out of bounds {next:?}"));
            }
            state = next;
        }
        Ok(())
    }

    /// Returns whether the run ended in FAULT.
    pub fn check_label_nesting(seed: u64) -> Result<bool, String> {
        let params = PlantParams::default();
        let horizon = 30_000.0;
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let attack = random_attack(&mut rng, seed, horizon);
        let tr = simulate(&params, horizon, Some(&attack), seed).map_err(|e| e.to_string())?;
        for t in 0..tr.len() {
            if tr.fault[t] && !tr.danger[t] {
                return Err(format!("seed {seed}: fault without danger at {t}"));
            }
            if tr.danger[t] && !tr.attack[t] {
                return Err(format!("seed {seed}: danger without attack at {t}"));
            }
            if t > 0 && ((!tr.attack[t] && tr.attack[t - 1]) || (!tr.danger[t] && tr.danger[t - 1]) || (!tr.fault[t] && tr.fault[t - 1])) {
                return Err(format!("seed {seed}: label cleared at {t}"));
            }
        }
        Ok(tr.fault.last() == Some(&true))
    }

    /// A normal run over 2.5 nominal cycles reopens the inlet at least
    /// twice and carries no labels.
    pub fn check_cycle_completion(seed: u64) -> Result<(), String> {
        let params = PlantParams::default();
        let cycle = params.nominal_cycle_duration().map_err(|e| e.to_string())?;
        let tr = simulate(&params, 2.5 * cycle, None, seed).map_err(|e| e.to_string())?;
        if tr.attack.iter().chain(&tr.danger).chain(&tr.fault).any(|&l| l) {
            return Err(format!("seed {seed}: labels set on a normal run"));
        }
        let valve = tr.series.channel(INJ_VALVE_ACT).ok_or("no valve channel")?;
        let openings = valve.windows(2).filter(|p| p[0] == 0.0 && p[1] == 1.0).count();
        if openings < 2 {
            return Err(format!("seed {seed}: inlet reopened {openings} times"));
        }
        Ok(())
    }
}

#[allow(unused_imports)]
pub use plant_checks::*;
