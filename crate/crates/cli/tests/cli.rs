use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn lossnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lossnet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stderr).expect("stderr is JSON")
}

#[test]
fn validate_bundled_golden_ratio() {
    let out = lossnet(&["validate", "--spec", "builtin:golden-ratio"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["valid"], true);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["classes"][0]["alpha"], 1.0);
}

#[test]
fn validate_reports_violations_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(
        &path,
        r#"{"nodes":[{"id":"a","capacity":1}],
            "classes":[{"id":"r","lambda":1,"mu":0,"gamma":1,"entry":{"a":1},
                        "routing":{"a":{"exit":0.9}}}]}"#,
    )
    .unwrap();
    let out = lossnet(&["validate", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_json(&out);
    assert_eq!(err["error"]["kind"], "invalid");
    assert_eq!(err["error"]["violations"][0]["kind"], "row_not_stochastic");
}

#[test]
fn malformed_document_is_a_validation_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    fs::write(&path, "{ not json").unwrap();
    let out = lossnet(&["validate", "--spec", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(stderr_json(&out)["error"]["kind"], "parse");
}

#[test]
fn missing_file_is_an_io_failure() {
    let out = lossnet(&["validate", "--spec", "/nonexistent/spec.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert_eq!(stderr_json(&out)["error"]["kind"], "io");
}

#[test]
fn single_map_step_does_not_converge() {
    let out = lossnet(&[
        "equilibrium",
        "--spec",
        "builtin:golden-ratio",
        "--method",
        "phi",
        "--max-iter",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(stderr_json(&out)["error"]["kind"], "not_converged");
}

#[test]
fn equilibrium_report_golden_ratio() {
    let out = lossnet(&[
        "equilibrium",
        "--spec",
        "builtin:golden-ratio",
        "--tol",
        "1e-11",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    let g = (5f64.sqrt() - 1.0) / 2.0;
    for node in v["nodes"].as_array().unwrap() {
        assert!((node["t"].as_f64().unwrap() - g).abs() < 1e-9);
        assert!((node["blocking"].as_f64().unwrap() - (1.0 - g)).abs() < 1e-9);
        assert_eq!(node["saturated"], true);
    }
    assert!(
        v["cross_checks"]["linear_representation"]["distance"]
            .as_f64()
            .unwrap()
            < 1e-9
    );
    assert!(
        v["cross_checks"]["closed_form"]["distance"]
            .as_f64()
            .unwrap()
            < 1e-9
    );
}

#[test]
fn appendix_check_passes() {
    let out = lossnet(&["appendix-check"]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["summary"], "PASS");
    assert!(v["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| c["passed"] == true));
}

#[test]
fn two_node_reports_case() {
    let out = lossnet(&[
        "two-node", "--alpha1", "1", "--alpha2", "1", "--c1", "3", "--c2", "1",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert_eq!(v["case"], 2);
    assert_eq!(v["nodes"][1]["t"], 0.5);
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (
                e.file_name().into_string().unwrap(),
                fs::read(e.path()).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

#[test]
fn identical_runs_give_identical_artifacts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let out = lossnet(&[
            "simulate",
            "--spec",
            "builtin:four-node",
            "-N",
            "20",
            "--horizon",
            "2",
            "--replicas",
            "3",
            "--seed",
            "11",
            "--out",
            dir.path().to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0));
    }
    let fa = read_all(a.path());
    assert_eq!(fa.len(), 4);
    assert_eq!(fa, read_all(b.path()));
}

#[test]
fn artifacts_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let out = lossnet(&[
        "fluid",
        "--spec",
        "builtin:erlang",
        "--horizon",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("fluid.csv")).unwrap();
    let mut lines = csv.lines();
    let header: Value =
        serde_json::from_str(lines.next().unwrap().strip_prefix("# ").unwrap()).unwrap();
    assert_eq!(header["config"]["command"], "fluid");
    assert_eq!(header["config"]["horizon"], 1.0);
    assert_eq!(lines.next(), Some("time,node,class,value"));
    assert_eq!(lines.count(), 501);
    let report: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("fluid.json")).unwrap()).unwrap();
    assert_eq!(report["provenance"], header);
}

#[test]
fn simulated_and_fluid_csv_share_a_schema() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    for args in [
        &[
            "fluid",
            "--spec",
            "builtin:golden-ratio",
            "--horizon",
            "1",
            "--out",
            d,
        ][..],
        &[
            "simulate",
            "--spec",
            "builtin:golden-ratio",
            "--horizon",
            "1",
            "--out",
            d,
        ][..],
    ] {
        assert_eq!(lossnet(args).status.code(), Some(0));
    }
    let keys = |name: &str| -> Vec<String> {
        fs::read_to_string(dir.path().join(name))
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect()
    };
    assert_eq!(keys("fluid.csv"), keys("trajectory.csv"));
}

#[test]
fn unknown_builtin_is_rejected() {
    let out = lossnet(&["validate", "--spec", "builtin:nope"]);
    assert_eq!(out.status.code(), Some(2));
}
