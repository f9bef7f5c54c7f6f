//! End-to-end checks of the command-line surface: golden CSV header,
//! deterministic reruns and the documented exit codes.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vlasovlab"))
}

fn write(path: &Path, text: &str) {
    std::fs::write(path, text).unwrap();
}

fn tiny_2d_config() -> String {
    r#"{
        "dim": 2,
        "kernel": {"sign": 1.0, "coupling": 1.0},
        "field": {"family": "zero"},
        "initial": {"family": "gaussian", "amplitude": 1.0, "sigma_x": 1.0,
                    "sigma_v": 1.0, "cells_per_axis": 5, "radius": 5.3,
                    "weight_floor_rel": 0.0},
        "dt": 0.02,
        "horizon": 0.1,
        "output_every": 1,
        "moment_orders": [1, 2],
        "density_norm_orders": [1.0, 2.0]
    }"#
    .to_string()
}

#[test]
fn run_emits_golden_csv_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &tiny_2d_config());
    let out_dir = dir.path().join("out");
    let status = bin()
        .args(["run", cfg.to_str().unwrap(), "-o", out_dir.to_str().unwrap()])
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(out_dir.join("series.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("# vlasovlab-series v1 config="));
    // the column schema is frozen byte-for-byte
    assert_eq!(
        lines.next().unwrap(),
        "time,mass,sup_f,M1,N1,L1,M2,N2,L2,rho_p1,rho_p2,rho_inf"
    );
    assert!(out_dir.join("manifest.json").exists());
}

#[test]
fn deterministic_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &tiny_2d_config());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let status = bin()
            .args(["run", cfg.to_str().unwrap(), "-o", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = std::fs::read(out_a.join("series.csv")).unwrap();
    let b = std::fs::read(out_b.join("series.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn malformed_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &tiny_2d_config().replace("\"dt\": 0.02,", ""));
    let output = bin()
        .args(["run", cfg.to_str().unwrap(), "-o", dir.path().to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("dt"), "stderr should name the field: {stderr}");
}

#[test]
fn dimension_mismatched_check_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &tiny_2d_config());
    let output = bin()
        .args([
            "verify",
            cfg.to_str().unwrap(),
            "-o",
            dir.path().to_str().unwrap(),
            "--checks",
            "envelope-3d-short",
        ])
        .output()
        .unwrap();
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn verify_battery_passes_on_tiny_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &tiny_2d_config());
    let out_dir = dir.path().join("v");
    let output = bin()
        .args([
            "verify",
            cfg.to_str().unwrap(),
            "-o",
            out_dir.to_str().unwrap(),
            "--checks",
            "interpolation,moment-ode,no-work",
        ])
        .output()
        .unwrap();
    assert!(output.status.success(), "{output:?}");
    let text = std::fs::read_to_string(out_dir.join("verify_report.txt")).unwrap();
    assert!(text.contains("overall: PASS"), "{text}");
}

#[test]
fn twin_zero_perturbation_notices_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    write(&cfg, &tiny_2d_config());
    let output = bin()
        .args([
            "twin",
            cfg.to_str().unwrap(),
            "-o",
            dir.path().join("t").to_str().unwrap(),
            "--dv",
            "0",
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("degenerate"), "{stderr}");
}

#[test]
fn constants_prints_reference_values() {
    let output = bin()
        .args(["constants", "--dim", "3", "--n-min", "3", "--n-max", "4"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let text = String::from_utf8_lossy(&output.stdout);
    assert!(text.contains("4/3"));
    assert!(text.contains("21/10"));
}
