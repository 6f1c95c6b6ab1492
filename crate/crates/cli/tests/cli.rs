//! End-to-end checks of the `emp` binary: exit codes, file outputs, and the
//! schemas of everything it writes.

use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn emp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emp"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn write_model(dir: &Path) -> String {
    let path = dir.join("model.json");
    std::fs::write(
        &path,
        r#"{
            "n": 2, "d": 2,
            "edges": [[0, 1]],
            "vertex_costs": [[0.0, 1.0], [0.5, 0.0]],
            "edge_costs": [[[0.0, 1.0], [1.0, 0.0]]]
        }"#,
    )
    .expect("write model");
    path.to_string_lossy().into_owned()
}

#[test]
fn solve_converges_with_exit_zero_and_exact_result_schema() {
    let dir = tempfile::tempdir().expect("tempdir");
    let model = write_model(dir.path());
    let out = emp(
        &["solve", &model, "--eta", "5", "--trace", "--out-dir", "out"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let result: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/result.json")).unwrap())
            .expect("valid JSON");
    let object = result.as_object().expect("object");
    let mut keys: Vec<&str> = object.keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(
        keys,
        vec!["assignment", "converged", "integrality_margin", "iterations"]
    );
    assert_eq!(result["converged"], Value::Bool(true));
    assert_eq!(result["assignment"].as_array().unwrap().len(), 2);

    let trace = std::fs::read_to_string(dir.path().join("out/trace.csv")).unwrap();
    assert!(trace.starts_with("step,iteration,edge_i,edge_j,kind,lyapunov,delta_l,max_violation\n"));
    assert!(trace.contains("sweep_end"));
}

#[test]
fn solve_reports_nonconvergence_with_exit_two() {
    let dir = tempfile::tempdir().expect("tempdir");
    let model = write_model(dir.path());
    let out = emp(
        &[
            "solve",
            &model,
            "--eta",
            "5",
            "--epsilon",
            "1e-12",
            "--max-iterations",
            "1",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("converged: false"));
}

#[test]
fn malformed_model_fails_with_exit_one() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("broken.json");
    std::fs::write(&path, "{ not json").unwrap();
    let out = emp(&["solve", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error:"));
}

#[test]
fn invalid_model_semantics_fail_with_exit_one() {
    let dir = tempfile::tempdir().expect("tempdir");
    let path = dir.path().join("isolated.json");
    // Vertex 2 exists but touches no edge.
    std::fs::write(
        &path,
        r#"{
            "n": 3, "d": 2,
            "edges": [[0, 1]],
            "vertex_costs": [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
            "edge_costs": [[[0.0, 0.0], [0.0, 0.0]]]
        }"#,
    )
    .unwrap();
    let out = emp(&["solve", path.to_str().unwrap()], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("isolated"));
}

#[test]
fn bounds_prints_report_and_writes_file() {
    let dir = tempfile::tempdir().expect("tempdir");
    let model = write_model(dir.path());
    let out = emp(
        &["bounds", &model, "--eta", "5", "--out", "report.json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let printed: Value = serde_json::from_slice(&out.stdout).expect("stdout is the report JSON");
    let written: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("report.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(printed, written);
    assert!(printed["s_zero"].as_f64().unwrap() > 0.0);
    assert!(printed["cyclic_iteration_bound"].as_u64().unwrap() > 0);
    // This model's gap is enumerable, so the thresholds must be present.
    assert_eq!(printed["delta_provenance"]["source"], "integral_enumeration");
    assert!(printed["eta_threshold_l2"].as_f64().unwrap() > 0.0);
}

#[test]
fn experiment_writes_csv_and_summary() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = dir.path().join("spec.json");
    std::fs::write(
        &spec,
        r#"{
            "family": "grid",
            "sizes": [2],
            "eta_values": [5.0],
            "epsilon": 0.001,
            "variants": ["cyclic"],
            "trials": 2,
            "base_seed": 9,
            "iteration_budget": 40
        }"#,
    )
    .unwrap();
    let out = emp(
        &["experiment", spec.to_str().unwrap(), "--out-dir", "exp"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));

    let csv = std::fs::read_to_string(dir.path().join("exp/experiment.csv")).unwrap();
    assert!(csv.starts_with(
        "family,n,deg_cap,eta,variant,trial,sweep,hamming,max_violation,lyapunov\n"
    ));
    // Two trials, each with at least the initial row.
    assert!(csv.lines().count() > 2);

    let summary: Value = serde_json::from_str(
        &std::fs::read_to_string(dir.path().join("exp/summary.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(summary["runs"].as_array().unwrap().len(), 2);
    assert_eq!(summary["groups"].as_array().unwrap().len(), 1);
    assert_eq!(summary["spec"]["d"].as_u64(), Some(3));
}

#[test]
fn experiment_rejects_bad_spec_with_exit_one() {
    let dir = tempfile::tempdir().expect("tempdir");
    let spec = dir.path().join("bad.json");
    std::fs::write(
        &spec,
        r#"{
            "family": "grid", "sizes": [], "eta_values": [5.0],
            "epsilon": 0.001, "variants": ["cyclic"], "trials": 2, "base_seed": 9
        }"#,
    )
    .unwrap();
    let out = emp(
        &["experiment", spec.to_str().unwrap(), "--out-dir", "exp"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("exp/experiment.csv").exists());
}

#[test]
fn verify_battery_passes_with_self_check() {
    let dir = tempfile::tempdir().expect("tempdir");
    let out = emp(&["verify", "--self-check", "--eta", "8"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "output: {stdout}");
    assert!(stdout.contains("PASS consistency_gain_identity"));
    assert!(stdout.contains("PASS fault_injection_detector"));
    assert!(!stdout.contains("FAIL"));
}
