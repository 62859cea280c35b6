use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn codesign(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_codesign")).args(args).current_dir(cwd).env("CODESIGN_THREADS", "2").output().expect("spawn codesign")
}

fn ok(args: &[&str], cwd: &Path) -> Output {
    let out = codesign(args, cwd);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Data rows of a trace CSV, skipping the provenance comment and the header.
fn trace_rows(path: &Path) -> Vec<Vec<String>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn gen_plant_dimensions() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-plant", "--rows", "5", "--cols", "5", "--seed", "3", "--out", "grid.json"], dir.path());
    let grid = json(&dir.path().join("grid.json"));
    assert_eq!(grid["A"].as_array().unwrap().len(), 50);
    assert_eq!(grid["B"][0].as_array().unwrap().len(), 25);
    assert_eq!(grid["provenance"]["seed"], 3);

    ok(&["gen-plant", "--kind", "ieee13", "--out", "feeder.json"], dir.path());
    let feeder = json(&dir.path().join("feeder.json"));
    assert_eq!(feeder["A"].as_array().unwrap().len(), 26);
    assert_eq!(feeder["n_subsystems"], 13);
}

#[test]
fn invalid_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(codesign(&["gen-plant", "--rows", "0", "--out", "x.json"], dir.path()).status.code(), Some(2));
    assert_eq!(codesign(&["solve-lqr", "--plant", "missing.json", "--out", "x.json"], dir.path()).status.code(), Some(2));
    assert_eq!(codesign(&["run-ea", "--w-a", "-1", "--generations", "1", "--out", "r"], dir.path()).status.code(), Some(2));
    assert_eq!(codesign(&["repro", "nonsense"], dir.path()).status.code(), Some(2));
}

#[test]
fn solve_lqr_writes_gain_and_cost() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen-plant", "--rows", "2", "--cols", "2", "--out", "p.json"], dir.path());
    ok(&["solve-lqr", "--plant", "p.json", "--out", "lqr.json"], dir.path());
    let doc = json(&dir.path().join("lqr.json"));
    assert_eq!(doc["K_dense"].as_array().unwrap().len(), 4);
    assert!(doc["J_dense"].as_f64().unwrap() > 0.0);
    assert!(doc["closed_loop_radius"].as_f64().unwrap() < 1.0);
    assert!(doc["dare_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn run_ea_then_analyze() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let gens = "6";
    ok(&["run-ea", "--rows", "3", "--cols", "3", "--generations", gens, "--seed", "4", "--baselines", "--out", "a"], d);
    ok(&["run-ea", "--rows", "3", "--cols", "3", "--generations", gens, "--seed", "4", "--baselines", "--out", "b"], d);
    let trace = std::fs::read(d.join("a/trace.csv")).unwrap();
    assert_eq!(trace, std::fs::read(d.join("b/trace.csv")).unwrap(), "same seed must give identical traces");

    let rows = trace_rows(&d.join("a/trace.csv"));
    assert_eq!(rows.len(), 6);
    let best: Vec<f64> = rows.iter().map(|r| r[1].parse().unwrap()).collect();
    assert!(best.windows(2).all(|w| w[1] <= w[0]), "best cost must not increase: {best:?}");

    let report = json(&d.join("a/run_report.json"));
    assert!(report["diagonal_cost"].is_number() || report["diagonal_cost"] == "inf");
    assert_eq!(report["normalized_trajectory"].as_array().unwrap().len(), 6);
    assert!(report["analysis_report"].is_null());
    assert!(d.join("a/final_controller.json").is_file());

    ok(&["analyze", "--run", "a", "--samples", "10"], d);
    let analysis = json(&d.join("a/analysis.json"));
    assert!(analysis["L_J"].as_f64().unwrap() > 0.0);
    assert_eq!(analysis["predicted_curve"].as_array().unwrap().len(), 6);
    let predicted = std::fs::read_to_string(d.join("a/predicted.csv")).unwrap();
    assert_eq!(predicted.lines().filter(|l| !l.starts_with('#')).count(), 7);
    assert!(d.join("a/phi.csv").is_file());
    assert_eq!(json(&d.join("a/run_report.json"))["analysis_report"], "analysis.json");
}

#[test]
fn multiple_seeds_write_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&["run-ea", "--rows", "2", "--cols", "3", "--generations", "3", "--seed", "1", "--seeds", "3", "--out", "m"], d);
    for s in 1..=3 {
        assert_eq!(trace_rows(&d.join(format!("m/seed-{s}/trace.csv"))).len(), 3);
    }
    let summary = json(&d.join("m/summary.json"));
    assert_eq!(summary["seeds"], serde_json::json!([1, 2, 3]));
    assert_eq!(summary["normalized_final"]["n"], 3);
    let traj = std::fs::read_to_string(d.join("m/summary_trajectory.csv")).unwrap();
    assert!(traj.lines().any(|l| l == "generation,mean,std"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = r#"{"plant": {"rows": 2, "cols": 2}, "ea": {"generations": 4, "population": 8, "elites": 2}, "repair": {"target": 0.9}}"#;
    std::fs::write(d.join("cfg.json"), cfg).unwrap();
    ok(&["run-ea", "--config", "cfg.json", "--generations", "2", "--out", "c"], d);
    let used = json(&d.join("c/config.json"));
    assert_eq!(used["ea"]["generations"], 2);
    assert_eq!(used["ea"]["population"], 8);
    assert_eq!(used["repair"]["target"], 0.9);
    assert_eq!(trace_rows(&d.join("c/trace.csv")).len(), 2);
    assert_eq!(json(&d.join("c/plant.json"))["n_subsystems"], 4);
}

#[test]
fn decoupled_plant_analysis_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let plant = serde_json::json!({
        "n_subsystems": 2,
        "state_partition": [[0], [1]],
        "input_partition": [[0], [1]],
        "A": [[0.5, 0.0], [0.0, 0.7]],
        "B": [[1.0, 0.0], [0.0, 1.0]],
        "metadata": {"kind": "custom", "seed": null, "target_radius": null}
    });
    std::fs::write(d.join("p.json"), plant.to_string()).unwrap();
    ok(&["run-ea", "--plant", "p.json", "--generations", "2", "--population", "6", "--elites", "2", "--out", "r"], d);
    let out = codesign(&["analyze", "--run", "r", "--samples", "5"], d);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    let partial = json(&d.join("r/analysis.json"));
    assert!(partial["error"].as_str().unwrap().contains("distance"));
    assert_eq!(partial["n_delta"], serde_json::json!([2]));
}

#[test]
fn repair_demo_reports_outcome() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&["repair-demo", "--rows", "2", "--cols", "2", "--max-iter", "50"], dir.path());
    let doc: Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["initial_radius", "final_radius", "iterations", "succeeded", "schur_stable"] {
        assert!(doc.get(key).is_some(), "missing {key}");
    }
    assert!(doc["final_radius"].as_f64().unwrap() <= doc["initial_radius"].as_f64().unwrap());
}

#[test]
fn repro_writes_experiment_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(&["repro", "unstable", "--seeds", "2", "--generations", "3", "--out", "rp"], d);
    assert!(!out.stdout.is_empty());
    let root = d.join("rp/unstable");
    let summary = json(&root.join("summary.json"));
    assert_eq!(summary["arms"].as_array().unwrap().len(), 2);
    for tag in ["without-repair", "with-repair"] {
        for s in 1..=2 {
            assert_eq!(trace_rows(&root.join(format!("{tag}/seed-{s}.csv"))).len(), 3);
        }
        assert!(root.join(format!("trajectory-{tag}.csv")).is_file());
        let unstable = std::fs::read_to_string(root.join(format!("unstable-{tag}.csv"))).unwrap();
        assert!(unstable.lines().any(|l| l == "generation,seed_1,seed_2"));
    }
    assert!(root.join("summary.txt").is_file());
}
