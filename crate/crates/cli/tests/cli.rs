//! End-to-end checks of the `mepoly` binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mepoly::io::LambdaCheckpoint;
use mepoly::{NaturalParams, PolyDistribution};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

fn mepoly(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mepoly"))
        .args(args)
        .env_remove("MEPOLY_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = mepoly(args);
    assert!(
        out.status.success(),
        "mepoly {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(String::from).collect())
        .collect();
    (header, rows)
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn save_checkpoint(dir: &Path, dist: &PolyDistribution, lambda: &[f64]) -> PathBuf {
    let path = dir.join("lambda.bin");
    let params = NaturalParams::clipped(lambda, dist.lambda_clip()).unwrap();
    LambdaCheckpoint::new(dist, &params).unwrap().save(&path).unwrap();
    path
}

#[test]
fn sweep_writes_one_row_per_order_with_decreasing_l1() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("fit");
    ok(&["fit", "--manifold", "two_moons", "--orders", "2,4,6,8", "--out", s(&out)]);
    let (header, rows) = read_csv(&out.join("convergence.csv"));
    let l1_col = header.iter().position(|h| h == "l1").expect("l1 column");
    assert_eq!(rows.len(), 4);
    let l1: Vec<f64> = rows.iter().map(|r| r[l1_col].parse().unwrap()).collect();
    assert!(l1.windows(2).all(|w| w[1] < w[0]), "{l1:?}");
    for file in ["lambda.bin", "fit_report.json", "density.csv", "density.pgm", "resolved-config.json"] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let report = json(&out.join("fit_report.json"));
    assert_eq!(report["order"], 8);
    let resolved = json(&out.join("resolved-config.json"));
    assert_eq!(resolved["command"], "fit");
    assert_eq!(resolved["config"]["orders"], serde_json::json!([2, 4, 6, 8]));
}

#[test]
fn fitting_uniform_samples_gives_near_zero_lambda() {
    let dir = TempDir::new().unwrap();
    let samples = dir.path().join("uniform.csv");
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut text = String::from("x,y\n");
    for _ in 0..50_000 {
        let (x, y): (f64, f64) = (rng.gen_range(-1.0..=1.0), rng.gen_range(-1.0..=1.0));
        text.push_str(&format!("{x},{y}\n"));
    }
    std::fs::write(&samples, text).unwrap();
    let out = dir.path().join("fit");
    ok(&["fit", "--samples", s(&samples), "--order", "2", "--out", s(&out)]);
    let report = json(&out.join("fit_report.json"));
    assert_eq!(report["report"]["converged"], true);
    let lambda: Vec<f64> = serde_json::from_value(report["report"]["lambda"].clone()).unwrap();
    assert_eq!(lambda.len(), 6);
    assert!(lambda.iter().all(|l| l.abs() < 0.05), "{lambda:?}");
}

#[test]
fn missing_inputs_exit_with_two_and_name_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no_such_samples.csv");
    let out = mepoly(&["fit", "--samples", s(&missing), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_samples.csv"), "{stderr}");

    let missing = dir.path().join("absent.bin");
    for cmd in ["sample", "density"] {
        let out = mepoly(&[cmd, "--checkpoint", s(&missing), "--out", s(&dir.path().join(cmd))]);
        assert_eq!(out.status.code(), Some(2), "{cmd}");
        assert!(String::from_utf8_lossy(&out.stderr).contains("absent.bin"));
    }

    let layout = dir.path().join("missing_layout.toml");
    let out = mepoly(&["navigate", "--layout", s(&layout), "--out", s(&dir.path().join("n"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing_layout.toml"));
}

#[test]
fn usage_and_format_problems_exit_with_two() {
    let dir = TempDir::new().unwrap();
    assert_eq!(mepoly(&["fit", "--order", "many"]).status.code(), Some(2));
    assert_eq!(mepoly(&["sample"]).status.code(), Some(2));
    assert_eq!(mepoly(&["fit", "--manifold", "spiral"]).status.code(), Some(2));

    let garbage = dir.path().join("garbage.bin");
    std::fs::write(&garbage, b"not a checkpoint").unwrap();
    let out = mepoly(&["density", "--checkpoint", s(&garbage), "--out", s(&dir.path().join("d"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("garbage.bin"));

    let threads = Command::new(env!("CARGO_BIN_EXE_mepoly"))
        .args(["density", "--checkpoint", s(&garbage)])
        .env("MEPOLY_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(threads.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&threads.stderr).contains("MEPOLY_THREADS"));
}

#[test]
fn non_finite_parameters_exit_with_one() {
    let dir = TempDir::new().unwrap();
    let dist = PolyDistribution::full(1, 2, 16).unwrap();
    let bad = LambdaCheckpoint {
        dim: 1,
        order: 2,
        grid_size: 16,
        kind: mepoly::FeatureKind::Legendre,
        clip: 5.0,
        lambda: vec![0.0, f64::NAN, 1.0],
    };
    assert_eq!(bad.lambda.len(), dist.num_features());
    let path = dir.path().join("nan.bin");
    bad.save(&path).unwrap();
    let out = mepoly(&["sample", "--checkpoint", s(&path), "--out", s(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("not finite"));
}

#[test]
fn zero_lambda_density_is_a_constant_image() {
    let dir = TempDir::new().unwrap();
    let dist = PolyDistribution::full(2, 3, 16).unwrap();
    let ckpt = save_checkpoint(dir.path(), &dist, &vec![0.0; dist.num_features()]);
    let out = dir.path().join("density");
    ok(&["density", "--checkpoint", s(&ckpt), "--out", s(&out)]);
    let pgm = std::fs::read(out.join("density.pgm")).unwrap();
    let header = b"P5\n16 16\n255\n";
    assert_eq!(&pgm[..header.len()], header);
    assert!(pgm[header.len()..].iter().all(|&p| p == 255));
    assert_eq!(pgm.len(), header.len() + 256);
    let (header, rows) = read_csv(&out.join("density.csv"));
    assert_eq!(header, ["x", "y", "density"]);
    assert_eq!(rows.len(), 256);
    assert!(rows.iter().all(|r| (r[2].parse::<f64>().unwrap() - 0.25).abs() < 1e-12));
    assert!(out.join("resolved-config.json").is_file());
}

#[test]
fn sampling_then_fitting_recovers_lambda() {
    let dir = TempDir::new().unwrap();
    let dist = PolyDistribution::full(2, 3, 32).unwrap();
    let truth: Vec<f64> = (0..dist.num_features())
        .map(|i| if i == 0 { 0.0 } else { 0.6 * ((i as f64) * 1.3).sin() })
        .collect();
    let ckpt = save_checkpoint(dir.path(), &dist, &truth);
    let samples = dir.path().join("samples");
    ok(&["sample", "--checkpoint", s(&ckpt), "-n", "100000", "--seed", "4", "--out", s(&samples)]);
    let (header, rows) = read_csv(&samples.join("samples.csv"));
    assert_eq!(header, ["x0", "x1", "log_prob"]);
    assert_eq!(rows.len(), 100_000);

    let fit = dir.path().join("fit");
    ok(&[
        "fit", "--samples", s(&samples.join("samples.csv")), "--order", "3", "--grid-size", "32",
        "--out", s(&fit),
    ]);
    let report = json(&fit.join("fit_report.json"));
    let lambda: Vec<f64> = serde_json::from_value(report["report"]["lambda"].clone()).unwrap();
    let err = lambda[1..]
        .iter()
        .zip(&truth[1..])
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err < 0.05, "max |Δλ| = {err}");
}

#[test]
fn same_seed_gives_identical_csv_bytes() {
    let dir = TempDir::new().unwrap();
    let dist = PolyDistribution::full(1, 4, 64).unwrap();
    let ckpt = save_checkpoint(dir.path(), &dist, &[0.0, 0.3, -1.0, 0.2, 0.5]);
    let run = |name: &str, seed: &str| {
        let out = dir.path().join(name);
        ok(&["sample", "--checkpoint", s(&ckpt), "-n", "2000", "--jitter", "--seed", seed, "--out", s(&out)]);
        std::fs::read(out.join("samples.csv")).unwrap()
    };
    let a = run("a", "9");
    assert_eq!(a, run("b", "9"));
    assert_ne!(a, run("c", "10"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("run.toml");
    std::fs::write(&config, "[bandit]\norder = 6\ngrid_size = 16\nsteps = 3\nbatch_size = 64\n").unwrap();
    let out = dir.path().join("bandit");
    ok(&["--config", s(&config), "bandit", "--order", "2", "--out", s(&out)]);
    let resolved = json(&out.join("resolved-config.json"));
    assert_eq!(resolved["config"]["order"], 2);
    assert_eq!(resolved["config"]["grid_size"], 16);
    assert_eq!(resolved["config"]["steps"], 3);
    let (_, rows) = read_csv(&out.join("bandit_trace.csv"));
    assert_eq!(rows.len(), 4);
    let ckpt = LambdaCheckpoint::load(&out.join("lambda.bin")).unwrap();
    assert_eq!((ckpt.order, ckpt.grid_size), (2, 16));

    std::fs::write(&config, "[bandit]\nordr = 6\n").unwrap();
    let bad = mepoly(&["--config", s(&config), "bandit"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("run.toml"));
}

#[test]
fn navigate_accepts_a_layout_file() {
    let dir = TempDir::new().unwrap();
    let layout = dir.path().join("layout.toml");
    std::fs::write(&layout, mepoly::env::TWO_GOALS_LAYOUT).unwrap();
    let out = dir.path().join("nav");
    ok(&[
        "navigate", "--layout", s(&layout), "--steps", "512", "--episodes", "5", "--grid-size", "8",
        "--order", "2", "--out", s(&out),
    ]);
    for file in [
        "policy.bin", "value.bin", "metrics.csv", "trajectories.csv", "terminal_histogram.csv",
        "terminal_histogram.pgm", "eval.json", "resolved-config.json",
    ] {
        assert!(out.join(file).is_file(), "missing {file}");
    }
    let eval = json(&out.join("eval.json"));
    assert_eq!(eval["metrics"]["episodes"], 5);
    let (_, hist) = read_csv(&out.join("terminal_histogram.csv"));
    let total: usize = hist.iter().map(|r| r[4].parse::<usize>().unwrap()).sum();
    assert_eq!(total, 5);
}
