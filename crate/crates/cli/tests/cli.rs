use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lacn_twin::{build_voxel_grid, load_scene, MeasurementSet};
use serde_json::Value;
use tempfile::TempDir;

fn data(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(rel)
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lacn-twin"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

#[track_caller]
fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

fn csv_rows(p: &Path) -> usize {
    std::fs::read_to_string(p).unwrap().lines().count() - 1
}

/// One site, one cell, one sub-beam over a small airspace.
const SINGLE_BEAM_SCENE: &str = r#"{
  "airspace": {"center_m": [0, 0], "radius_m": 60, "z_min_m": 0, "z_max_m": 60, "voxel_m": 20},
  "radio": {"frequency_hz": 3.5e9},
  "sites": [{"id": "S", "position_m": [0, -150, 20], "cells": [
    {"id": "C", "tx_power_dbm": -20, "sub_beams": [
      {"bounds": {"azimuth_deg": [-20, 20], "tilt_deg": [0, 30]}, "baseline": [-20, 0], "candidate_step": [10, 10]}
    ]}
  ]}]
}"#;

fn write_scene(dir: &TempDir, body: &str) -> PathBuf {
    let p = dir.path().join("scene.json");
    std::fs::write(&p, body).unwrap();
    p
}

#[test]
fn build_exports_voxels_times_cells_rows() {
    let tmp = TempDir::new().unwrap();
    let scene_path = data("scenes/six_cell.json");
    run_ok(&["build", "--scene", s(&scene_path), "--out", s(tmp.path())]);

    let scene = load_scene(&scene_path).unwrap();
    let voxels = build_voxel_grid(&scene.airspace).unwrap().count();
    assert_eq!(csv_rows(&tmp.path().join("radio_field.csv")), voxels * 6);
    assert_eq!(csv_rows(&tmp.path().join("sinr_field.csv")), voxels);

    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["command"], "build");
    assert_eq!(manifest["seed"], 0);
    assert_eq!(manifest["config_paths"]["scene"], s(&scene_path));
}

#[test]
fn single_voxel_scene_exports_one_row_per_cell() {
    let tmp = TempDir::new().unwrap();
    let scene_path = data("scenes/six_cell.json");
    let overrides = [
        "--set",
        "airspace.radius_m=10",
        "--set",
        "airspace.z_min_m=50",
        "--set",
        "airspace.z_max_m=70",
        "--set",
        "airspace.voxel_m=20",
    ];
    let mut args = vec!["build", "--scene", s(&scene_path), "--out", s(tmp.path())];
    args.extend(overrides);
    run_ok(&args);
    let sinr = std::fs::read_to_string(tmp.path().join("sinr_field.csv")).unwrap();
    assert_eq!(sinr.lines().count() - 1, 1, "{sinr}");
    assert_eq!(csv_rows(&tmp.path().join("radio_field.csv")), 6);
    let manifest = read_json(&tmp.path().join("manifest.json"));
    assert_eq!(manifest["overrides"].as_array().unwrap().len(), 4);
}

#[test]
fn missing_scene_is_an_input_error_naming_the_path() {
    let tmp = TempDir::new().unwrap();
    let missing = tmp.path().join("nope.json");
    let out = run(&["build", "--scene", s(&missing), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

#[test]
fn bad_overrides_are_input_errors() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    for bad in ["weights.gamma=1", "radio.colour=1", "noequals"] {
        let out = run(&["build", "--scene", s(&scene), "--out", s(tmp.path()), "--set", bad]);
        assert_eq!(out.status.code(), Some(2), "{bad}");
    }
}

#[test]
fn scene_override_changes_the_field() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_ok(&["build", "--scene", s(&scene), "--out", s(&a)]);
    run_ok(&["build", "--scene", s(&scene), "--out", s(&b), "--set", "radio.noise_figure_db=12"]);
    let ra = std::fs::read(a.join("radio_field.csv")).unwrap();
    let rb = std::fs::read(b.join("radio_field.csv")).unwrap();
    assert_eq!(ra, rb, "noise figure does not touch RSRP");
    let sa = std::fs::read(a.join("sinr_field.csv")).unwrap();
    let sb = std::fs::read(b.join("sinr_field.csv")).unwrap();
    assert_ne!(sa, sb);
}

#[test]
fn brute_force_above_cap_is_a_computation_error() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let out = run(&["optimize", "--scene", s(&scene), "--out", s(tmp.path()), "--brute-force", "--cap", "10"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("exceeds the cap"));
    assert!(tmp.path().join("manifest.json").exists());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let dirs: Vec<PathBuf> = ["t1", "t3", "t1again"].iter().map(|d| tmp.path().join(d)).collect();
    for (dir, threads) in dirs.iter().zip(["1", "3", "1"]) {
        run_ok(&["optimize", "--scene", s(&scene), "--out", s(dir), "--threads", threads]);
    }
    let files = [
        "assignment.json",
        "trace.json",
        "compare_report.json",
        "coverage_report.json",
        "heatmap_rsrp_delta_50m.csv",
    ];
    for f in files {
        let first = std::fs::read(dirs[0].join(f)).unwrap();
        for d in &dirs[1..] {
            assert_eq!(first, std::fs::read(d.join(f)).unwrap(), "{f} differs in {d:?}");
        }
    }
}

#[test]
fn optimize_improves_strict_rsrp_on_sample_scene() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    run_ok(&["optimize", "--scene", s(&scene), "--out", s(tmp.path())]);
    let cmp = read_json(&tmp.path().join("compare_report.json"));
    let row = cmp["rows"]
        .as_array()
        .unwrap()
        .iter()
        .find(|r| r["metric"] == "rsrp_strict")
        .unwrap();
    assert!(row["after"].as_f64().unwrap() > row["before"].as_f64().unwrap(), "{row}");

    let trace = read_json(&tmp.path().join("trace.json"));
    for step in trace.as_array().unwrap() {
        assert!(step["objective_after"].as_f64() >= step["objective_before"].as_f64());
    }
}

#[test]
fn greedy_matches_brute_force_on_single_sub_beam() {
    let tmp = TempDir::new().unwrap();
    let scene = write_scene(&tmp, SINGLE_BEAM_SCENE);
    let g = tmp.path().join("greedy");
    let b = tmp.path().join("brute");
    run_ok(&["optimize", "--scene", s(&scene), "--out", s(&g), "--epsilon-gain", "0"]);
    run_ok(&["optimize", "--scene", s(&scene), "--out", s(&b), "--brute-force"]);
    assert_eq!(
        std::fs::read(g.join("assignment.json")).unwrap(),
        std::fs::read(b.join("assignment.json")).unwrap()
    );
    let brute = read_json(&b.join("brute_force.json"));
    // 5 azimuths x 4 tilts, baseline on the lattice
    assert_eq!(brute["evaluated"], 20);
}

#[test]
fn optimal_initial_assignment_is_a_fixed_point() {
    let tmp = TempDir::new().unwrap();
    let scene = write_scene(&tmp, SINGLE_BEAM_SCENE);
    let b = tmp.path().join("brute");
    let g = tmp.path().join("again");
    run_ok(&["optimize", "--scene", s(&scene), "--out", s(&b), "--brute-force"]);
    let best = b.join("assignment.json");
    run_ok(&[
        "optimize", "--scene", s(&scene), "--assignment", s(&best), "--out", s(&g), "--epsilon-gain", "0",
    ]);
    let trace = read_json(&g.join("trace.json"));
    for step in trace.as_array().unwrap() {
        assert!(step["delta"].as_f64().unwrap().abs() < 1e-9, "{step}");
    }
    let out: Value = read_json(&g.join("assignment.json"));
    assert_eq!(out, read_json(&best));
}

fn synth(dir: &Path, scene: &Path, trajectory: &Path, sigma: &str, seed: &str) -> PathBuf {
    run_ok(&[
        "synth",
        "--scene",
        s(scene),
        "--trajectory",
        s(trajectory),
        "--noise-sigma-db",
        sigma,
        "--seed",
        seed,
        "--out",
        s(dir),
    ]);
    dir.join("measurements.csv")
}

fn helix_trajectory(dir: &TempDir, n_points: usize) -> PathBuf {
    let p = dir.path().join("helix.json");
    let body = serde_json::json!({
        "pattern": {"kind": "helix", "center_m": [0, 0], "radius_m": 120, "z_start_m": 10, "z_end_m": 95, "turns": 5},
        "n_points": n_points
    });
    std::fs::write(&p, body.to_string()).unwrap();
    p
}

#[test]
fn synth_is_deterministic_and_noise_has_requested_spread() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let traj = helix_trajectory(&tmp, 1000);
    let clean = synth(&tmp.path().join("clean"), &scene, &traj, "0", "5");
    let noisy = synth(&tmp.path().join("noisy"), &scene, &traj, "2", "5");
    let again = synth(&tmp.path().join("again"), &scene, &traj, "2", "5");
    assert_eq!(std::fs::read(&noisy).unwrap(), std::fs::read(&again).unwrap());

    let clean = MeasurementSet::load(&clean).unwrap();
    let noisy = MeasurementSet::load(&noisy).unwrap();
    assert_eq!(clean.len(), 1000);
    let d: Vec<f64> = noisy
        .values()
        .iter()
        .zip(clean.values())
        .map(|(n, c)| n - c)
        .collect();
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (d.len() - 1) as f64).sqrt();
    assert!((1.8..=2.2).contains(&sd), "sample sd {sd}");
}

/// Pooled RMSE per predictor name.
fn validate(dir: &Path, scene: &Path, measurements: &Path) -> Value {
    run_ok(&[
        "validate",
        "--scene",
        s(scene),
        "--measurements",
        s(measurements),
        "--out",
        s(dir),
    ]);
    read_json(&dir.join("validation_report.json"))
}

fn pooled_rmse(report: &Value, predictor: &str) -> Option<f64> {
    report["pooled"]
        .as_array()
        .unwrap()
        .iter()
        .find(|p| p["predictor"] == predictor)
        .and_then(|p| p["rmse_db"].as_f64())
}

#[test]
fn validate_recovers_known_noise_level() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let traj = helix_trajectory(&tmp, 1000);

    let clean = synth(&tmp.path().join("clean"), &scene, &traj, "0", "1");
    let report = validate(&tmp.path().join("v0"), &scene, &clean);
    assert_eq!(report["n_folds"], 3);
    assert_eq!(report["folds"].as_array().unwrap().len(), 3);
    assert_eq!(pooled_rmse(&report, "twin"), Some(0.0));

    let noisy = synth(&tmp.path().join("noisy"), &scene, &traj, "2", "1");
    let report = validate(&tmp.path().join("v2"), &scene, &noisy);
    let rmse = pooled_rmse(&report, "twin").unwrap();
    assert!((1.8..=2.2).contains(&rmse), "twin RMSE {rmse}");
    assert!(pooled_rmse(&report, "kriging").is_some());
    assert!(pooled_rmse(&report, "nearest_neighbor").is_some());
}

#[test]
fn calibrate_recovers_offset_and_flags_drift() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let traj = helix_trajectory(&tmp, 200);
    run_ok(&[
        "synth", "--scene", s(&scene), "--trajectory", s(&traj), "--offset-db", "3", "--out",
        s(&tmp.path().join("m")),
    ]);
    let m = tmp.path().join("m/measurements.csv");
    let out = tmp.path().join("c");
    run_ok(&[
        "calibrate", "--scene", s(&scene), "--measurements", s(&m), "--drift-threshold-db", "1",
        "--out", s(&out),
    ]);
    let fit = read_json(&out.join("calibration.json"));
    assert_eq!(fit["offset_db"], 3.0);
    assert_eq!(fit["residual_rmse_db"], 0.0);
    assert_eq!(fit["n_samples"], 200);
    let drift = read_json(&out.join("drift_report.json"));
    assert_eq!(drift["drift_detected"], true);
    assert_eq!(drift["rmse_db"], 3.0);
}

#[test]
fn mapping_file_ingests_foreign_columns() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let traj = helix_trajectory(&tmp, 120);
    let canonical = synth(&tmp.path().join("m"), &scene, &traj, "1", "3");
    let set = MeasurementSet::load(&canonical).unwrap();

    // same samples under different column names and a semicolon delimiter
    let mut foreign = String::from("rsrp;pci;east;north;up\n");
    for smp in set.samples() {
        let [x, y, z] = smp.position_m;
        let pci = smp.cell_id.trim_start_matches('C');
        foreign.push_str(&format!("{};{pci};{x};{y};{z}\n", smp.rsrp_dbm));
    }
    let foreign_path = tmp.path().join("foreign.csv");
    std::fs::write(&foreign_path, foreign).unwrap();
    let mapping = serde_json::json!({
        "position": {"kind": "enu", "x": "east", "y": "north", "z": "up"},
        "cell_id": "pci",
        "rsrp_dbm": "rsrp",
        "cell_aliases": {"1": "C1", "2": "C2", "3": "C3", "4": "C4", "5": "C5", "6": "C6"},
        "delimiter": ";"
    });
    let mapping_path = tmp.path().join("mapping.json");
    std::fs::write(&mapping_path, mapping.to_string()).unwrap();

    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    let base = ["calibrate", "--scene", s(&scene)];
    run_ok(&[&base[..], &["--measurements", s(&canonical), "--out", s(&a)]].concat());
    run_ok(
        &[
            &base[..],
            &["--measurements", s(&foreign_path), "--mapping", s(&mapping_path), "--out", s(&b)],
        ]
        .concat(),
    );
    assert_eq!(
        std::fs::read(a.join("calibration.json")).unwrap(),
        std::fs::read(b.join("calibration.json")).unwrap()
    );
}

#[test]
fn evaluate_with_mask_restricts_the_voxel_set() {
    let tmp = TempDir::new().unwrap();
    let scene = data("scenes/six_cell.json");
    let traj = helix_trajectory(&tmp, 300);
    let route = synth(&tmp.path().join("m"), &scene, &traj, "0", "0");
    let full = tmp.path().join("full");
    let masked = tmp.path().join("masked");
    run_ok(&["evaluate", "--scene", s(&scene), "--out", s(&full)]);
    run_ok(&["evaluate", "--scene", s(&scene), "--mask", s(&route), "--out", s(&masked)]);
    let f = read_json(&full.join("coverage_report.json"));
    let m = read_json(&masked.join("coverage_report.json"));
    assert_eq!(f["masked"], false);
    assert_eq!(m["masked"], true);
    let (nf, nm) = (f["counts"]["total"].as_u64().unwrap(), m["counts"]["total"].as_u64().unwrap());
    assert!(nm > 0 && nm < nf, "{nm} of {nf}");
}
