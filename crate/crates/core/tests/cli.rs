use std::process::{Command, Output};

use irpushpull::metrics::read_csv;

fn irpp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_irpp")).args(args).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn least_norm_preset_reaches_the_known_solution() {
    let out = irpp(&["run", "--preset", "least-norm"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = read_csv(out.stdout.as_slice()).unwrap();
    let last = rows.last().unwrap();
    assert_eq!(last.k, 2000);
    assert!(last.dist_xstar.unwrap() <= 1e-2);
    let header = text(&out.stdout);
    assert!(header.starts_with("# irpp "));
    assert!(header.contains("# rng: chacha8"));
    assert!(header.contains("# epsilon: 0.05"));
    assert!(header.contains("#   name = \"least-norm\""));
}

#[test]
fn validate_ring_preset() {
    let out = irpp(&["validate", "--preset", "deblur"]);
    assert!(out.status.success());
    let stdout = text(&out.stdout);
    assert!(stdout.lines().filter(|l| l.starts_with("PASS")).count() >= 4);
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn missing_config_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let target = dir.path().join("out.csv");
    let out = irpp(&[
        "run",
        "--config",
        "missing.file",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(!target.exists());
    assert!(text(&out.stderr).contains("missing.file"));
}

#[test]
fn usage_errors_print_synopsis() {
    let out = irpp(&["run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("Usage"));
    let out = irpp(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(2));
    let out = irpp(&["run", "--preset", "nope"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("unknown preset"));
}

#[test]
fn divergence_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let shown = irpp(&["show", "least-norm"]);
    let cfg = text(&shown.stdout).replace("gamma0 = 0.05", "gamma0 = 50.0");
    let path = dir.path().join("diverge.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = irpp(&["run", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
    assert!(text(&out.stderr).contains("diverge"));
}

#[test]
fn config_round_trip_and_output_file() {
    let dir = tempfile::tempdir().unwrap();
    let shown = irpp(&["show", "least-norm"]);
    assert!(shown.status.success());
    let cfg = text(&shown.stdout).replace("iterations = 2000", "iterations = 100\noutput = \"res/run.csv\"");
    let path = dir.path().join("tiny.toml");
    std::fs::write(&path, cfg).unwrap();
    let out = irpp(&["run", "--config", path.to_str().unwrap(), "--stride", "25"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let rows = read_csv(std::fs::read(dir.path().join("res/run.csv")).unwrap().as_slice()).unwrap();
    let ks: Vec<usize> = rows.iter().map(|r| r.k).collect();
    assert_eq!(ks, vec![0, 25, 50, 75, 100]);
}

#[test]
fn compare_writes_both_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let out = irpp(&[
        "compare",
        "--preset",
        "sensor",
        "--iterations",
        "2000",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let ir = read_csv(std::fs::read(dir.path().join("sensor-ir.csv")).unwrap().as_slice()).unwrap();
    let fixed = read_csv(std::fs::read(dir.path().join("sensor-fixed.csv")).unwrap().as_slice()).unwrap();
    assert_eq!(ir.len(), fixed.len());
    assert!(fixed.iter().all(|r| r.lambda == 0.1));
    assert!(text(&out.stdout).contains("dist_xstar"));
}

#[test]
fn oracle_prints_the_bilevel_solution() {
    let out = irpp(&["oracle", "--preset", "least-norm", "--lambda", "0"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let stdout = text(&out.stdout);
    let xs: Vec<f64> = stdout
        .lines()
        .filter(|l| !l.starts_with('#') && *l != "i,x")
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert_eq!(xs.len(), 2);
    assert!(xs.iter().all(|x| (x - 1.0).abs() < 1e-9));
}

#[test]
fn oracle_cache_is_written() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache.json");
    let args = ["oracle", "--preset", "least-norm", "--lambda", "0.01", "--cache", cache.to_str().unwrap()];
    let first = irpp(&args);
    assert!(first.status.success(), "{}", text(&first.stderr));
    assert!(cache.exists());
    let second = irpp(&args);
    assert_eq!(first.stdout, second.stdout);
}
