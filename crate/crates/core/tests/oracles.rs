mod common;

use common::{ema_oracle, intervals_oracle, mse_oracle, quantile_oracle};
use ghlfd::detect::{decide, ema_smooth, fit_threshold, pointwise_mse};
use ghlfd::evaluate::{score_intervals, threshold_grid};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

#[test]
fn pointwise_mse_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let m = rng.gen_range(1..8);
        let n = rng.gen_range(1..300);
        let x: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let y: Vec<f64> = (0..n * m).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let got = pointwise_mse(&x, &y, m).unwrap();
        for (a, b) in got.iter().zip(mse_oracle(&x, &y, m)) {
            assert!(close(*a, b), "{a} vs {b}");
        }
    }
}

#[test]
fn ema_matches_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let n = rng.gen_range(1..400);
        let h = rng.gen_range(1.0..500.0);
        let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.0..5.0)).collect();
        let got = ema_smooth(&raw, h).unwrap();
        for (a, b) in got.iter().zip(ema_oracle(&raw, h)) {
            assert!(close(*a, b), "{a} vs {b}");
        }
    }
}

#[test]
fn threshold_matches_counting_quantile() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for i in 0..100 {
        let n = rng.gen_range(1000..1500);
        let q = if i % 2 == 0 { 0.999 } else { rng.gen_range(0.01..0.99) };
        // some instances with heavy ties
        let values: Vec<f64> = if i % 5 == 0 {
            (0..n).map(|_| f64::from(rng.gen_range(0..7u8))).collect()
        } else {
            (0..n).map(|_| rng.gen_range(0.0..2.0f64).powi(3)).collect()
        };
        let got = fit_threshold(&values, q).unwrap();
        let want = quantile_oracle(&values, q);
        assert!(close(got, want), "{got} vs {want}");
    }
}

#[test]
fn interval_scoring_matches_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let n = rng.gen_range(1..600);
        let len = rng.gen_range(1..50);
        let onset = rng.gen_range(0..n + 1);
        let danger: Vec<bool> = (0..n).map(|t| t >= onset).collect();
        let rate = rng.gen_range(0.0..0.2);
        let decisions: Vec<bool> = (0..n).map(|_| rng.gen_bool(rate)).collect();
        let c = score_intervals(&decisions, &danger, len).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_, c.tn), intervals_oracle(&decisions, &danger, len));
    }
}

#[test]
fn ema_halves_after_twice_the_window() {
    for w in [30usize, 60, 120] {
        let h = 2 * w;
        let mut impulse = vec![0.0; h + 1];
        impulse[0] = 1.0;
        let s = ema_smooth(&impulse, h as f64).unwrap();
        assert!((s[h] - 0.5).abs() < 1e-12, "w = {w}: {}", s[h]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn decisions_and_recall_shrink_as_threshold_rises(
        scores in prop::collection::vec(0.0f64..3.0, 50..400),
        onset in 0usize..400,
        len in 1usize..40,
    ) {
        let danger: Vec<bool> = (0..scores.len()).map(|t| t >= onset).collect();
        let grid = threshold_grid(0.01, 3.0, 40);
        let mut prev_set: Option<Vec<bool>> = None;
        let mut prev_recall = f64::INFINITY;
        for &thr in &grid {
            let d = decide(&scores, thr);
            if let Some(p) = &prev_set {
                prop_assert!(d.iter().zip(p).all(|(now, before)| !*now || *before));
            }
            let recall = score_intervals(&d, &danger, len).unwrap().recall();
            prop_assert!(recall <= prev_recall);
            prev_recall = recall;
            prev_set = Some(d);
        }
    }

    #[test]
    fn permuting_within_an_interval_keeps_counts(
        decisions in prop::collection::vec(any::<bool>(), 20..200),
        onset in 0usize..200,
        len in 1usize..20,
        seed in any::<u64>(),
    ) {
        use rand::seq::SliceRandom;
        let danger: Vec<bool> = (0..decisions.len()).map(|t| t >= onset).collect();
        let base = score_intervals(&decisions, &danger, len).unwrap();
        let mut shuffled = decisions.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for chunk in shuffled.chunks_mut(len) {
            chunk.shuffle(&mut rng);
        }
        prop_assert_eq!(score_intervals(&shuffled, &danger, len).unwrap(), base);
    }

    #[test]
    fn positives_do_not_depend_on_threshold(
        scores in prop::collection::vec(0.0f64..1.0, 20..300),
        onset in 0usize..300,
        len in 1usize..30,
        thr in 0.0f64..1.0,
    ) {
        let danger: Vec<bool> = (0..scores.len()).map(|t| t >= onset).collect();
        let c = score_intervals(&decide(&scores, thr), &danger, len).unwrap();
        let all = score_intervals(&vec![true; scores.len()], &danger, len).unwrap();
        prop_assert_eq!(c.tp + c.fn_, all.tp);
    }

    #[test]
    fn smoothed_error_is_nonnegative(raw in prop::collection::vec(0.0f64..10.0, 1..200), h in 1.0f64..300.0) {
        prop_assert!(ema_smooth(&raw, h).unwrap().iter().all(|&s| s >= 0.0));
    }
}
