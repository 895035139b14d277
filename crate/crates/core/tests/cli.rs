use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vi-aoa"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn config(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("configs")
        .join(name)
        .to_string_lossy()
        .into_owned()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("scenario.json");
    std::fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn out(dir: &Path, sub: &str) -> (PathBuf, String) {
    let p = dir.join(sub);
    let s = p.to_string_lossy().into_owned();
    (p, s)
}

const SMALL: &str = r#"{"array": {"n_antennas": 16, "spacing_ratio": 0.5}, "users": 1, "aoas_deg": "random-in-sector",
    "snr_db": [5, 15], "n_trials": 3, "seed": 1, "snapshots": 10, "grid_step_deg": 0.05}"#;

#[test]
fn missing_config_is_usage_error() {
    let o = run(&["benchmark", "--config", "missing.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.json"));
}

#[test]
fn malformed_config_names_field_and_line() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "{\n  \"array\": {\"n_antennas\": 16, \"spacing_ratio\": 0.5},\n  \"users\": \"two\"\n}",
    );
    let o = run(&["benchmark", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("users") && err.contains("line 3"), "{err}");

    let cfg = write_config(tmp.path(), &SMALL.replace("\"seed\"", "\"sed\""));
    let o = run(&["benchmark", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("sed"));

    let cfg = write_config(tmp.path(), &SMALL.replace("\"n_trials\": 3", "\"n_trials\": 0"));
    assert_eq!(run(&["benchmark", "--config", &cfg]).status.code(), Some(1));
}

#[test]
fn usage_errors() {
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["benchmark"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (_, o) = out(tmp.path(), "o");
    assert_eq!(run(&["simulate", "--config", &cfg, "--format", "csv", "--out-dir", &o]).status.code(), Some(1));
    assert_eq!(run(&["estimate", "--config", &cfg, "--snr-index", "9", "--out-dir", &o]).status.code(), Some(1));
    let o = bin().args(["benchmark", "--config", &cfg, "--out-dir", &o]).env("THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    // A 5° scan cannot resolve the oscillation of a 64-element array.
    let cfg = write_config(
        tmp.path(),
        r#"{"array": {"n_antennas": 64, "spacing_ratio": 2.0}, "users": 1, "aoas_deg": [11.0],
            "snr_db": ["inf"], "n_trials": 1, "seed": 0, "snapshots": 1,
            "landscape": {"scan_step_deg": 5.0}}"#,
    );
    let (_, o) = out(tmp.path(), "o");
    let r = run(&["landscape", "--config", &cfg, "--out-dir", &o]);
    assert_eq!(r.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&r.stderr).contains("too coarse"));
}

#[test]
fn estimate_is_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config("single_user.json");
    let (a, sa) = out(tmp.path(), "a");
    let (b, sb) = out(tmp.path(), "b");
    for dir in [&sa, &sb] {
        assert!(run(&["estimate", "--config", &cfg, "--seed", "7", "--out-dir", dir]).status.success());
    }
    let first = std::fs::read(a.join("estimate.json")).unwrap();
    assert_eq!(first, std::fs::read(b.join("estimate.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&first).unwrap();
    assert!(v.get("wall_clock_ms").is_none());
    assert!(v["result"]["loss_trace"].as_array().unwrap().len() > 1);

    let (c, sc) = out(tmp.path(), "c");
    assert!(run(&["estimate", "--config", &cfg, "--seed", "8", "--timing", "--out-dir", &sc]).status.success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(c.join("estimate.json")).unwrap()).unwrap();
    assert!(v["wall_clock_ms"].as_f64().unwrap() >= 0.0);
    assert_ne!(v["true_aoas_deg"], serde_json::from_slice::<serde_json::Value>(&first).unwrap()["true_aoas_deg"]);
}

#[test]
fn estimate_from_simulated_file_matches_direct_run() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (sim, ssim) = out(tmp.path(), "sim");
    assert!(run(&["simulate", "--config", &cfg, "--out-dir", &ssim]).status.success());
    let observations = sim.join("observations.json");
    let all: serde_json::Value = serde_json::from_slice(&std::fs::read(&observations).unwrap()).unwrap();
    assert_eq!(all.as_array().unwrap().len(), 6);

    let (a, sa) = out(tmp.path(), "a");
    let (b, sb) = out(tmp.path(), "b");
    let input = observations.to_string_lossy().into_owned();
    let args = ["--snr-index", "1", "--trial", "2"];
    assert!(run(&[&["estimate", "--config", &cfg, "--out-dir", &sa][..], &args].concat()).status.success());
    assert!(run(&[&["estimate", "--config", &cfg, "--out-dir", &sb, "--input", &input][..], &args].concat())
        .status
        .success());
    assert_eq!(
        std::fs::read(a.join("estimate.json")).unwrap(),
        std::fs::read(b.join("estimate.json")).unwrap()
    );
}

fn data_rows(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(String::from).collect()
}

#[test]
fn landscape_exports() {
    let tmp = tempfile::tempdir().unwrap();
    let (c, sc) = out(tmp.path(), "c");
    assert!(run(&["landscape", "--config", &config("fig2c.json"), "--out-dir", &sc]).status.success());
    let optima = data_rows(&c.join("optima.csv"));
    assert_eq!(optima.len(), 4);
    assert!(optima.iter().any(|r| r.starts_with("0,") && r.ends_with(",11")));

    let (a, sa) = out(tmp.path(), "a");
    assert!(run(&["landscape", "--config", &config("fig2a.json"), "--out-dir", &sa]).status.success());
    assert_eq!(data_rows(&a.join("optima.csv")).len(), 1);
    let stationary = data_rows(&a.join("stationary.csv"));
    assert!(stationary.len() > 2);
    for row in &stationary {
        let residual: f64 = row.split(',').nth(1).unwrap().parse().unwrap();
        assert!(residual < 1e-8, "{row}");
    }
    let line = std::fs::read_to_string(a.join("surface_aoa.csv")).unwrap();
    assert_eq!(line.lines().count(), 2);
    let plane = std::fs::read_to_string(a.join("surface_aoa_path_angle.csv")).unwrap();
    assert_eq!(plane.lines().count(), 362);
    assert_eq!(plane.lines().next().unwrap().split(',').count(), 74);

    let (j, sj) = out(tmp.path(), "j");
    assert!(run(&["landscape", "--config", &config("fig2c.json"), "--out-dir", &sj, "--format", "json"])
        .status
        .success());
    let v: serde_json::Value = serde_json::from_slice(&std::fs::read(j.join("landscape.json")).unwrap()).unwrap();
    assert_eq!(v["optima"]["alias_angles"].as_array().unwrap().len(), 4);
}

#[test]
fn benchmark_outputs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), SMALL);
    let (a, sa) = out(tmp.path(), "a");
    let (b, sb) = out(tmp.path(), "b");
    assert!(run(&["benchmark", "--config", &cfg, "--out-dir", &sa, "--timing"]).status.success());
    assert!(bin()
        .args(["benchmark", "--config", &cfg, "--out-dir", &sb])
        .env("THREADS", "1")
        .status()
        .unwrap()
        .success());
    for f in ["metrics.csv", "trials.csv"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert!(a.join("timing.csv").exists() && !b.join("timing.csv").exists());
    assert_eq!(data_rows(&a.join("metrics.csv")).len(), 4);
    assert_eq!(data_rows(&a.join("trials.csv")).len(), 12);

    let (c, sc) = out(tmp.path(), "c");
    assert!(run(&["benchmark", "--config", &cfg, "--out-dir", &sc, "--seed", "2"]).status.success());
    assert_ne!(std::fs::read(a.join("trials.csv")).unwrap(), std::fs::read(c.join("trials.csv")).unwrap());
}
