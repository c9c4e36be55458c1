use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn warpcert(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_warpcert"))
        .args(args)
        .current_dir(dir)
        .env_remove("WARPCERT_WORKERS")
        .output()
        .unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn default_run_passes_and_writes_every_file() {
    let tmp = tempfile::tempdir().unwrap();
    let out = warpcert(&["all", "--out", "o", "--quiet"], tmp.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let dir = tmp.path().join("o");
    for f in ["report.json", "summary.csv", "profile.csv", "curvature.csv", "spectrum.csv"] {
        assert!(dir.join(f).is_file(), "{f}");
    }
    let report = json(&dir.join("report.json"));
    assert_eq!(report["verdict"], "pass");
    assert!(report["failed_stage"].is_null());

    let profile = fs::read_to_string(dir.join("profile.csv")).unwrap();
    let row = profile.lines().nth(1).unwrap();
    for field in row.split(',') {
        let digits = field.split(['e', 'E']).next().unwrap().chars().filter(char::is_ascii_digit).count();
        assert!(digits >= 17 || field.parse::<f64>().unwrap() == 0.0, "{field}");
    }
}

#[test]
fn construct_skips_the_spectrum() {
    let tmp = tempfile::tempdir().unwrap();
    let out = warpcert(&["construct", "--out", "o", "--format", "csv"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let dir = tmp.path().join("o");
    assert!(dir.join("profile.csv").is_file());
    assert!(!dir.join("spectrum.csv").exists());
    assert!(!dir.join("report.json").exists());
}

#[test]
fn parameter_window_violation_is_a_verdict_failure() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "[construction]\nalpha = 2.0\n").unwrap();
    let out = warpcert(&["certify", "--config", "c.toml", "--out", "o", "--format", "json"], tmp.path());
    assert_eq!(out.status.code(), Some(1));
    let report = json(&tmp.path().join("o/report.json"));
    assert_eq!(report["failed_stage"], "validate");
    assert_eq!(report["verdict"], "fail");
}

#[test]
fn usage_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(warpcert(&[], tmp.path()).status.code(), Some(2));
    assert_eq!(warpcert(&["all", "--format", "xml"], tmp.path()).status.code(), Some(2));
    assert_eq!(warpcert(&["all", "--config", "missing.toml"], tmp.path()).status.code(), Some(2));
    fs::write(tmp.path().join("bad.toml"), "[construction]\nalpah = 2.2\n").unwrap();
    assert_eq!(warpcert(&["all", "--config", "bad.toml"], tmp.path()).status.code(), Some(2));
    fs::write(tmp.path().join("neg.toml"), "[spectral]\nmodes_per_k = 1\n").unwrap();
    assert_eq!(warpcert(&["spectrum", "--config", "neg.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn default_config_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let out = warpcert(&["--print-default-config"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let parsed = warpcert::pipeline::PipelineConfig::from_toml(&text).unwrap();
    assert_eq!(parsed, warpcert::pipeline::PipelineConfig::default());
    fs::write(tmp.path().join("d.toml"), &text).unwrap();
    let out = warpcert(&["construct", "--config", "d.toml", "--out", "o", "--quiet"], tmp.path());
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    for d in ["a", "b"] {
        let out = warpcert(&["certify", "--seed", "7", "--out", d, "--quiet"], tmp.path());
        assert_eq!(out.status.code(), Some(0));
    }
    for f in ["report.json", "summary.csv", "curvature.csv"] {
        assert_eq!(fs::read(tmp.path().join("a").join(f)).unwrap(), fs::read(tmp.path().join("b").join(f)).unwrap());
    }
}

#[test]
fn integrator_failure_exits_with_three() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.toml"), "[construction]\ntol = 1e-30\nT = 0.5\n").unwrap();
    let out = warpcert(&["construct", "--config", "c.toml", "--out", "o", "--format", "json"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(json(&tmp.path().join("o/report.json"))["failed_stage"], "ode");
}

#[test]
fn sweep_honors_worker_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "[spectral]\nmodel = \"sphere\"\nsphere_dim = 3\n\n[sweep]\neps = [0.1, 0.5, 6.0]\n";
    fs::write(tmp.path().join("c.toml"), cfg).unwrap();
    let run = |workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_warpcert"))
            .args(["sweep", "--config", "c.toml", "--out", "o"])
            .current_dir(tmp.path())
            .env("WARPCERT_WORKERS", workers)
            .output()
            .unwrap()
    };
    let out = run("2");
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert_eq!(stdout, fs::read_to_string(tmp.path().join("o/summary.csv")).unwrap());
    let reports = json(&tmp.path().join("o/report.json"));
    let idx: Vec<_> = reports.as_array().unwrap().iter().map(|r| r["spectrum"]["morse_index"].as_u64()).collect();
    assert_eq!(idx[..2], [Some(1), Some(1)]);
    assert!(idx[2].unwrap() > 1);

    assert_eq!(run("zero").status.code(), Some(2));
}
