use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

fn ghlfd(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghlfd"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const TINY: &[&str] = &["--w", "10", "--hidden", "4", "--epochs", "2", "--seed", "3"];

fn with(base: &[&str], extra: &[&str]) -> Vec<String> {
    base.iter().chain(extra).map(|s| s.to_string()).collect()
}

fn run(dir: &Path, args: Vec<String>) -> Output {
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    ghlfd(dir, &refs)
}

fn train_tiny(dir: &Path, out: &str, data: &str) -> Output {
    let mut args = with(&["train", "--out", out], TINY);
    args.push(data.into());
    run(dir, args)
}

#[test]
fn full_pipeline_on_small_traces() {
    let t0 = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();

    let sim = ghlfd(
        d,
        &[
            "simulate", "--out", "data", "--normal", "--attack", "max-rt-level", "--count", "2", "--horizon", "60000",
            "--start-min", "15000", "--start-max", "30000", "--value-min", "95", "--value-max", "115", "--decimate",
            "10", "--seed", "1",
        ],
    );
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    let normal = std::fs::read_to_string(d.join("data/normal.csv")).unwrap();
    let header = normal.lines().next().unwrap();
    assert!(header.ends_with("ATTACK,DANGER,FAULT"));
    assert!(normal.lines().skip(1).all(|l| l.ends_with(",0,0,0")));
    for k in 1..=2 {
        let text = std::fs::read_to_string(d.join(format!("data/attack_max-rt-level_{k:03}.csv"))).unwrap();
        let attack_col = header.split(',').position(|c| c == "ATTACK").unwrap();
        assert!(text.lines().skip(1).any(|l| l.split(',').nth(attack_col) == Some("1")));
    }

    let again = ghlfd(d, &["simulate", "--out", "again", "--manifest", "data/manifest.json"]);
    assert_eq!(code(&again), 0, "{}", stderr(&again));
    for f in ["normal.csv", "attack_max-rt-level_001.csv", "attack_max-rt-level_002.csv", "manifest.json"] {
        assert_eq!(
            std::fs::read(d.join("data").join(f)).unwrap(),
            std::fs::read(d.join("again").join(f)).unwrap(),
            "{f}"
        );
    }

    let train = train_tiny(d, "model", "data/normal.csv");
    assert_eq!(code(&train), 0, "{}", stderr(&train));
    assert!(d.join("model/model.json").exists() && d.join("model/effective.conf").exists());

    let tests = ["data/attack_max-rt-level_001.csv", "data/attack_max-rt-level_002.csv"];
    let detect = run(d, with(&["detect", "--out", "det", "--model", "model/model.json", "--jobs", "2"], &tests));
    assert_eq!(code(&detect), 0, "{}", stderr(&detect));
    let errors = std::fs::read_to_string(d.join("det/attack_max-rt-level_001_errors.csv")).unwrap();
    assert!(errors.starts_with("time,raw,smoothed,threshold,decision"));

    let eval = run(
        d,
        with(&["eval", "--out", "eval", "--model", "model/model.json", "--pca-normal", "data/normal.csv"], &tests),
    );
    assert_eq!(code(&eval), 0, "{}", stderr(&eval));
    for f in ["report.csv", "curve.csv", "per_trace.csv", "pca_report.csv", "summary.txt", "effective.conf"] {
        assert!(d.join("eval").join(f).exists(), "{f}");
    }

    let mut study = with(&["study", "--out", "study", "--normal", "data/normal.csv", "--windows", "10,20", "--dropouts", "0.1", "--jobs", "2"], TINY);
    study.extend(tests.iter().map(|s| s.to_string()));
    let study = run(d, study);
    assert_eq!(code(&study), 0, "{}", stderr(&study));
    let csv = std::fs::read_to_string(d.join("study/study.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);

    assert!(t0.elapsed().as_secs() < 60);
}

#[test]
fn training_length_boundary_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let sim = ghlfd(d, &["simulate", "--out", "data", "--normal", "--horizon", "20000", "--decimate", "10", "--seed", "2"]);
    assert_eq!(code(&sim), 0, "{}", stderr(&sim));
    let text = std::fs::read_to_string(d.join("data/normal.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    std::fs::write(d.join("two_w.csv"), lines[..21].join("\n")).unwrap();
    std::fs::write(d.join("short.csv"), lines[..20].join("\n")).unwrap();

    let ok = train_tiny(d, "m", "two_w.csv");
    assert_eq!(code(&ok), 0, "{}", stderr(&ok));
    assert!(stderr(&ok).contains("no threshold"));

    let short = train_tiny(d, "m2", "short.csv");
    assert_eq!(code(&short), 2);
    assert!(stderr(&short).contains("short.csv") && stderr(&short).contains("at least 20"), "{}", stderr(&short));

    // unset threshold must be supplied by the operator
    let no_thr = ghlfd(d, &["detect", "--out", "det", "--model", "m/model.json", "data/normal.csv"]);
    assert_eq!(code(&no_thr), 1);
    let with_thr = ghlfd(d, &["detect", "--out", "det", "--model", "m/model.json", "--threshold", "0.5", "data/normal.csv"]);
    assert_eq!(code(&with_thr), 0, "{}", stderr(&with_thr));

    let no_seed = ghlfd(d, &["train", "--out", "m3", "--w", "10", "two_w.csv"]);
    assert_eq!(code(&no_seed), 1);
    assert_eq!(code(&ghlfd(d, &["train", "--out", "m3", "--nonsense", "two_w.csv"])), 1);
    assert_eq!(code(&ghlfd(d, &["--help"])), 0);

    let narrow: Vec<String> = lines.iter().map(|l| l.split(',').take(3).collect::<Vec<_>>().join(",")).collect();
    std::fs::write(d.join("narrow.csv"), narrow.join("\n")).unwrap();
    let mismatch = ghlfd(d, &["detect", "--out", "det2", "--model", "m/model.json", "--threshold", "1", "narrow.csv"]);
    assert_eq!(code(&mismatch), 2);
    assert!(stderr(&mismatch).contains("channel mismatch"));
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let sim = ghlfd(d, &["simulate", "--out", "data", "--normal", "--horizon", "20000", "--decimate", "10", "--seed", "4"]);
    assert_eq!(code(&sim), 0);
    std::fs::write(d.join("run.conf"), "w = 12\nhidden = 4\nepochs = 1\nseed = 9\ndropout = 0.3\n").unwrap();
    let out = ghlfd(d, &["train", "--out", "m", "--config", "run.conf", "--w", "10", "data/normal.csv"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let eff = std::fs::read_to_string(d.join("m/effective.conf")).unwrap();
    for line in ["w = 10", "seed = 9", "dropout = 0.3", "hidden = 4,4"] {
        assert!(eff.lines().any(|l| l == line), "missing {line:?} in\n{eff}");
    }

    std::fs::write(d.join("bad.conf"), "w = 10\nwindow_len = 3\n").unwrap();
    let bad = ghlfd(d, &["train", "--out", "m2", "--config", "bad.conf", "--seed", "1", "data/normal.csv"]);
    assert_eq!(code(&bad), 1);
    assert!(stderr(&bad).contains("bad.conf"));
}
