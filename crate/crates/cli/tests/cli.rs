use std::fs;
use std::path::Path;
use std::process::Command;

use qspeckle_cli::{analyze, simulate, theory, CliError, RunConfig};

const TINY: &str = r#"{
  "lambda_nm": 810, "sigma0_um": 80, "sigma_minus_mm": 1, "sigma_plus_mm": 1.8,
  "grid_n": 256, "pitch_um": 20, "z_list_cm": [2, 6], "realizations": 3, "seed": 11,
  "method": "angular_spectrum", "blur_um": 200, "threshold": 0.7,
  "frames": {"z_cm": 6, "n_frames": 2000, "pairs_per_frame": 5,
             "dark_rate": 0.01, "background_rate": 0.01, "bin": 2}
}"#;

fn tiny() -> RunConfig {
    RunConfig::from_json(TINY).unwrap()
}

fn write_config(dir: &Path, text: &str) -> std::path::PathBuf {
    let p = dir.join("config.json");
    fs::write(&p, text).unwrap();
    p
}

fn qspeckle(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qspeckle"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .unwrap()
}

#[test]
fn simulate_then_analyze_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    let m = simulate(&tiny(), &run).unwrap();
    assert_eq!(m.maps.len(), 2);
    assert_eq!(m.realization_seeds, vec![11, 12, 13]);
    assert_eq!(m.screens.len(), 3);
    let curve = analyze(&run, &run).unwrap();
    assert_eq!(curve.z_cm, vec![2.0, 6.0]);
    assert!(curve.w_plus_um.iter().all(|w| w.is_finite() && *w > 0.0));
    let csv = fs::read_to_string(run.join("widths.csv")).unwrap();
    assert!(csv.starts_with("z_cm,w_plus_um,w_minus_um,l_plus_mm,l_minus_mm"));
    assert!(run.join("regime.json").exists());
    assert!(run.join("autocorr_z002.000cm.pgm").exists());
}

#[test]
fn manifest_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    simulate(&tiny(), &dir.path().join("a")).unwrap();
    simulate(&tiny(), &dir.path().join("b")).unwrap();
    for f in [
        "manifest.json",
        "mean_z006.000cm.f64",
        "single_z002.000cm.f64",
    ] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn empty_z_list_is_a_config_error() {
    let err = RunConfig::from_json(&TINY.replace("[2, 6]", "[]")).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn theory_writes_curves_and_boundaries() {
    let dir = tempfile::tempdir().unwrap();
    let csv = theory(&tiny(), dir.path()).unwrap();
    let text = fs::read_to_string(csv).unwrap();
    assert_eq!(text.lines().count(), 201);
    let last: Vec<f64> = text
        .lines()
        .last()
        .unwrap()
        .split(',')
        .map(|x| x.parse().unwrap())
        .collect();
    // far field on both axes at the end of the curve
    assert!(last[2] > last[1]);
    assert!(dir.path().join("boundaries.json").exists());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let missing = qspeckle(&[
        "simulate",
        "--config",
        "/nonexistent/cfg.json",
        "--out",
        out,
    ]);
    assert_eq!(missing.status.code(), Some(4));

    let cfg = write_config(
        dir.path(),
        &TINY.replace("\"threshold\"", "\"bogus\": 1, \"threshold\""),
    );
    let unknown = qspeckle(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(unknown.status.code(), Some(2));

    let cfg = write_config(dir.path(), &TINY.replace("[2, 6]", "[500]"));
    let aliased = qspeckle(&["simulate", "--config", cfg.to_str().unwrap(), "--out", out]);
    assert_eq!(aliased.status.code(), Some(3));

    let cfg = write_config(dir.path(), TINY);
    let ok = qspeckle(&[
        "frames",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out,
        "--seed",
        "5",
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let report = fs::read_to_string(dir.path().join("out/frames_report.json")).unwrap();
    assert!(report.contains("\"seed\": 5"));
}

#[test]
fn shipped_configs_validate() {
    for text in [
        include_str!("../../../configs/intermediate.json"),
        include_str!("../../../configs/small.json"),
    ] {
        let cfg = RunConfig::from_json(text).unwrap();
        cfg.check_aliasing().unwrap();
    }
    let small = RunConfig::from_json(include_str!("../../../configs/small.json")).unwrap();
    small.small().validate().unwrap();
}
