use std::process::{Command, Output};

use serde_json::Value;

fn ksenergy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksenergy"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).unwrap()
}

const SMALL: [&str; 6] = ["--resolution", "12", "-k", "64", "--sphere-order", "64"];

#[test]
fn ks_energy_of_identity_has_constant_column() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ks-energy", "--out", dir.path().to_str().unwrap()];
    args.extend(SMALL);
    let out = ksenergy(&args);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["schema"], "ksenergy-report/1");
    let per_h = doc["result"]["ks"]["per_h"].as_array().unwrap();
    let first = per_h[0]["integral"].as_f64().unwrap();
    for row in per_h {
        assert!((row["integral"].as_f64().unwrap() - first).abs() < 1e-12);
    }
    let csv = std::fs::read_to_string(dir.path().join("per_h.csv")).unwrap();
    assert!(csv.starts_with("h,integral\n"));
    assert_eq!(csv.lines().count(), 7);
    assert!(dir.path().join("report.json").exists());
    assert!(dir.path().join("ks_density.csv").exists());
}

#[test]
fn compare_constant_map_is_zero_on_both_sides() {
    let mut args = vec!["compare", "--map", "constant"];
    args.extend(SMALL);
    let out = ksenergy(&args);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["report"]["ks"]["energy"], 0.0);
    assert_eq!(doc["result"]["report"]["rep"]["sphere"]["energy"], 0.0);
    assert_eq!(doc["result"]["relative_gap"], 0.0);
}

#[test]
fn compare_writes_density_gap_field() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![
        "compare",
        "--space",
        "max_norm_plane",
        "--form",
        "both",
        "--out",
        dir.path().to_str().unwrap(),
    ];
    args.extend(SMALL);
    let out = ksenergy(&args);
    assert!(out.status.success());
    let doc = stdout_json(&out);
    assert!(doc["result"]["relative_gap"].as_f64().unwrap() < 0.02);
    assert!(doc["result"]["budget"]["sphere_ball_difference"].is_number());
    let csv = std::fs::read_to_string(dir.path().join("density_gap.csv")).unwrap();
    assert!(csv.starts_with("x0,x1,ks_density,rep_density,gap\n"));
}

#[test]
fn counterexample_rejects_other_maps() {
    for args in [
        vec!["counterexample", "--map", "constant"],
        vec!["counterexample", "--space", "euclidean:2"],
        vec!["counterexample", "--n", "3", "--space", "euclidean:3"],
    ] {
        let out = ksenergy(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert_eq!(stderr_json(&out)["error"]["kind"], "config");
    }
}

#[test]
fn counterexample_reports_both_densities() {
    let out = ksenergy(&["counterexample", "--resolution", "8"]);
    assert!(out.status.success());
    let r = &stdout_json(&out)["result"];
    assert_eq!(r["frame_sum_density"], 2.0);
    let s = r["sphere_average_density"].as_f64().unwrap();
    assert!((s - (2.0 + std::f64::consts::PI) / (2.0 * std::f64::consts::PI)).abs() < 1e-4);
    assert_eq!(r["strict_inequality"], true);
}

#[test]
fn config_errors_exit_with_two() {
    let cases: [&[&str]; 5] = [
        &["ks-energy", "--p", "0.5"],
        &["ks-energy", "--space", "hyperbolic"],
        &["rep-energy", "--map", "winding:2"],
        &["ks-energy", "--h-sequence", "0.01,0.02"],
        &["ks-energy", "--bounds", "1,0"],
    ];
    for args in cases {
        let out = ksenergy(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = stderr_json(&out);
        assert_eq!(err["error"]["kind"], "config", "{args:?}");
        assert!(err["error"]["message"].as_str().unwrap().len() > 10);
    }
    let out = ksenergy(&["ks-energy", "--p", "0.5"]);
    assert_eq!(stderr_json(&out)["error"]["field"], "p");
}

#[test]
fn malformed_config_file_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, "{\n  \"space\": \"circle\",\n  oops\n}").unwrap();
    let out = ksenergy(&["ks-energy", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let msg = stderr_json(&out)["error"]["message"]
        .as_str()
        .unwrap()
        .to_string();
    assert!(msg.contains("line 3"), "{msg}");
}

#[test]
fn strict_promotes_warnings() {
    // One anchor and no probes: doubling K moves the energy.
    let args = [
        "rep-energy",
        "--space",
        "max_norm_plane",
        "--resolution",
        "8",
        "-k",
        "1",
        "--no-accelerate",
    ];
    let out = ksenergy(&args);
    assert!(out.status.success());
    assert!(!stdout_json(&out)["warnings"].as_array().unwrap().is_empty());
    let mut strict = args.to_vec();
    strict.push("--strict");
    assert_eq!(ksenergy(&strict).status.code(), Some(3));
}

// A single far dense anchor isolates the finite-difference error; with many
// anchors, those landing within a few stencil widths of u(x) add a bias that
// is not a power of the step.
#[test]
fn convergence_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksenergy(&[
        "convergence",
        "--map",
        "smooth",
        "--resolution",
        "12",
        "-k",
        "1",
        "--deltas",
        "4",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let r = &stdout_json(&out)["result"];
    assert_eq!(r["k_monotone"], true);
    let order = r["delta_fit"]["order"].as_f64().unwrap();
    assert!((order - 2.0).abs() < 0.05, "{order}");
    assert_eq!(r["delta_fit"]["method"], "power");
    for name in [
        "per_h.csv",
        "k_sweep.csv",
        "sphere_order_sweep.csv",
        "delta_sweep.csv",
    ] {
        assert!(dir.path().join(name).exists(), "{name}");
    }
}

#[test]
fn k_sweep_on_max_norm_is_nondecreasing() {
    let out = ksenergy(&[
        "convergence",
        "--space",
        "max_norm_plane",
        "--resolution",
        "8",
        "--deltas",
        "3",
    ]);
    assert!(out.status.success());
    let rows = stdout_json(&out)["result"]["k_sweep"]
        .as_array()
        .unwrap()
        .clone();
    let e: Vec<f64> = rows.iter().map(|r| r["energy"].as_f64().unwrap()).collect();
    assert!(e.windows(2).all(|w| w[1] >= w[0]), "{e:?}");
}

#[test]
fn oracle_prints_reference_values() {
    let out = ksenergy(&["oracle", "--matrix", "1,0;0,2"]);
    assert!(out.status.success());
    let r = &stdout_json(&out)["result"];
    assert!((r["linear_euclidean"]["density"].as_f64().unwrap() - 2.5).abs() < 1e-9);
    let s = r["maxnorm_counterexample"]["sphere_average"]
        .as_f64()
        .unwrap();
    assert!((s - r["maxnorm_counterexample"]["closed_form"].as_f64().unwrap()).abs() < 1e-9);
}
