//! Black-box checks of the `membrane` binary: exit codes, flag handling,
//! and byte-identical artifacts for identical (config, seed) pairs.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_membrane"))
}

fn repo_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

#[test]
fn unknown_flag_exits_with_usage_error() {
    let status = bin()
        .args(["simulate", "--frobnicate"])
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn missing_config_exits_with_usage_error() {
    let status = bin().arg("simulate").output().unwrap().status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn malformed_config_exits_with_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "seed = \"not a number\"\n").unwrap();
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&cfg)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(2));
}

#[test]
fn identical_config_and_seed_reproduce_identical_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path| {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(repo_config("golden_q0.cfg"))
            .args(["--paths", "2000", "--out"])
            .arg(out)
            .output()
            .unwrap()
            .status;
        assert_eq!(status.code(), Some(0));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a);
    run(&b);
    for name in ["terminal_density.csv", "gamma_checkpoints.csv"] {
        assert_eq!(
            std::fs::read(a.join(name)).unwrap(),
            std::fs::read(b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn seed_override_changes_the_ensemble() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &Path, seed: &str| {
        let status = bin()
            .args(["simulate", "--config"])
            .arg(repo_config("golden_q0.cfg"))
            .args(["--paths", "2000", "--seed", seed, "--out"])
            .arg(out)
            .output()
            .unwrap()
            .status;
        assert_eq!(status.code(), Some(0));
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&a, "1");
    run(&b, "2");
    assert_ne!(
        std::fs::read(a.join("terminal_density.csv")).unwrap(),
        std::fs::read(b.join("terminal_density.csv")).unwrap()
    );
}

#[test]
fn golden_null_config_verifies_clean() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["verify", "--config"])
        .arg(repo_config("golden_q0.cfg"))
        .args(["--seed", "42", "--out"])
        .arg(dir.path().join("v"))
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = std::fs::read_to_string(dir.path().join("v/manifest.json")).unwrap();
    assert!(manifest.contains("\"pass\": true"));
    assert!(manifest.contains("\"config_hash\""));
}

#[test]
fn resolvent_stage_reports_residual_and_flags_coarse_grids() {
    let dir = tempfile::tempdir().unwrap();
    // Stated grids: residual report written, sup within tolerance, exit 0.
    let out_ok = dir.path().join("ok");
    let status = bin()
        .args(["resolvent", "--config"])
        .arg(repo_config("golden_q0.cfg"))
        .args(["--lambda", "1", "--out"])
        .arg(&out_ok)
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(0));
    assert!(out_ok.join("resolvent_report.json").exists());
    assert!(out_ok.join("resolvent_residuals.csv").exists());

    // A deliberately coarse time grid misses the residual target: exit 1.
    let base = std::fs::read_to_string(repo_config("golden_q0.cfg")).unwrap();
    let coarse = base
        .replace("potential_dtau = 1e-3", "potential_dtau = 0.05")
        .replace("potential_n = 1000", "potential_n = 20");
    let cfg = dir.path().join("coarse.cfg");
    std::fs::write(&cfg, coarse).unwrap();
    let status = bin()
        .args(["resolvent", "--config"])
        .arg(&cfg)
        .args(["--out"])
        .arg(dir.path().join("coarse"))
        .output()
        .unwrap()
        .status;
    assert_eq!(status.code(), Some(1));
}
