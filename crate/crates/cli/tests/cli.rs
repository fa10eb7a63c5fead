use std::path::Path;
use std::process::{Command, Output};

use conehj::cone::{ConePoint, Partition};
use conehj::solvers::{InitialCondition, SeparableConvex, SlopeProfile};
use serde_json::{json, Value};

fn conehj(cmd: &str, cfg: &Value, out: &Path, extra: &[&str]) -> Output {
    let file = out.join("config.json");
    std::fs::write(&file, cfg.to_string()).unwrap();
    Command::new(env!("CARGO_BIN_EXE_conehj"))
        .args([cmd, "--config", file.to_str().unwrap(), "--out", out.to_str().unwrap()])
        .args(extra)
        .output()
        .unwrap()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.split(',').map(String::from).collect()).collect()
}

fn xi() -> Value {
    json!({"D": 1, "poly": {"2": 1.0}})
}

#[test]
fn solve_reproduces_psi_at_time_zero() {
    let dir = tempfile::tempdir().unwrap();
    let samples = [[0.0, 0.0, 0.0], [0.1, 0.4, 0.9], [0.5, 0.5, 1.5]];
    let cfg = json!({"command": "solve", "params": {
        "psi": {"separable_convex": {"h": {"affine": {"a": 0.2, "b": 0.5}}, "a": {"affine": {"a": 0.1, "b": 0.2}}}},
        "xi": xi(), "partition": {"uniform": 3}, "times": [0.0, 0.5], "samples": samples, "method": "hopf_lax"}});
    let o = conehj("solve", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let psi =
        SeparableConvex::new(SlopeProfile::Affine { a: 0.2, b: 0.5 }, SlopeProfile::Affine { a: 0.1, b: 0.2 }).unwrap();
    let rows = read_csv(&dir.path().join("solve.csv"));
    assert_eq!(rows.len(), 6);
    let mut checked = 0;
    for row in rows.iter().filter(|r| r[0].parse::<f64>().unwrap() == 0.0) {
        let id: usize = row[1].parse().unwrap();
        let x = ConePoint::from_scalars(Partition::uniform(3).unwrap(), &samples[id]).unwrap();
        let v: f64 = row[2].parse().unwrap();
        assert!((v - psi.eval(&x)).abs() < 1e-14, "sample {id}: {v}");
        checked += 1;
    }
    assert_eq!(checked, 3);
    let sidecar = read_json(&dir.path().join("solve.csv.json"));
    assert_eq!(sidecar["command"], "solve");
    assert_eq!(sidecar["config_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "fm-verify", "seed": 5, "params": {
        "partition": {"uniform": 1}, "x_max": 2.0, "steps": 20, "function": {"separable": {"h": [0.3], "a": [0.2]}}}});
    let o = conehj("fm-verify", &cfg, dir.path(), &["--seed", "99"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(read_json(&dir.path().join("fm_verify.csv.json"))["seed"], 99);
}

#[test]
fn converge_reports_a_decaying_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "converge", "seed": 1, "params": {
        "psi": {"composed_concave": {"h": {"affine": {"a": 0.0, "b": 1.0}}}},
        "xi": xi(), "first": 4, "last": 16, "points": 6, "radius": 2.0, "t_max": 1.0}});
    let o = conehj("converge", &cfg, dir.path(), &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let report = read_json(&dir.path().join("converge_report.json"));
    assert!(report["slope"].as_f64().unwrap() < -0.4, "{report}");
}

#[test]
fn fm_verify_separates_monotone_from_non_monotone() {
    let dir = tempfile::tempdir().unwrap();
    let good = json!({"command": "fm-verify", "params": {
        "partition": {"uniform": 2}, "x_max": 2.0, "steps": 16,
        "function": {"separable": {"h": [0.2, 0.6], "a": [0.3, 0.5]}}}});
    assert_eq!(conehj("fm-verify", &good, dir.path(), &[]).status.code(), Some(0));

    let bad = json!({"command": "fm-verify", "params": {
        "partition": {"uniform": 2}, "x_max": 2.0, "steps": 16,
        "function": {"separable": {"h": [0.2, -0.6], "a": [0.0, 0.0]}}}});
    let o = conehj("fm-verify", &bad, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stdout));
    let report = read_json(&dir.path().join("fm_verify_report.json"));
    assert!(!report["dual_increasing"]["counterexample"].is_null(), "{report}");
}

#[test]
fn unknown_keys_are_rejected_with_a_pointer() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "fm-verify", "params": {
        "partition": {"uniform": 2}, "x_max": 2.0, "steps": 16, "stepz": 3,
        "function": {"separable": {"h": [0.2, 0.6], "a": [0.3, 0.5]}}}});
    let o = conehj("fm-verify", &cfg, dir.path(), &[]);
    assert_eq!(o.status.code(), Some(1));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("/params") && err.contains("stepz") && err.contains("Config: fm-verify"), "{err}");
}

#[test]
fn config_must_match_the_subcommand() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "accept", "params": {"only": [3]}});
    assert_eq!(conehj("solve", &cfg, dir.path(), &[]).status.code(), Some(1));
}

#[test]
fn compare_passes_and_its_negative_control_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = json!({"command": "compare", "params": {
        "psi": {"piecewise_linear_mean": {"value0": 0.0, "breaks": [0.5], "slopes": [0.3, 0.8]}},
        "xi": xi(), "dx": 0.02, "horizon": 1.0, "time_steps": 4, "r": 2.0, "stride": 2, "negative_control": 5.0}});
    let o = conehj("compare", &cfg, dir.path(), &[]);
    let report = read_json(&dir.path().join("compare_report.json"));
    assert!(report["comparison"]["pass"].as_bool().unwrap(), "{report}");
    assert!(!report["negative_control"]["pass"].as_bool().unwrap(), "{report}");
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
}
