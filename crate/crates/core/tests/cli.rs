use std::path::PathBuf;
use std::process::{Command, Output};

use painleve::catalogue::catalogue;
use serde_json::Value;

fn painleve(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_painleve")).args(args).output().expect("binary runs")
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("painleve-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn json_report(args: &[&str]) -> (i32, Value) {
    let mut all = args.to_vec();
    all.extend(["--json", "-"]);
    let out = painleve(&all);
    let doc = serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stderr)));
    (out.status.code().unwrap(), doc)
}

#[test]
fn euclidean_report_exits_zero() {
    let (code, doc) = json_report(&["report", "--example", "euclidean3", "--samples", "16"]);
    assert_eq!(code, 0);
    assert_eq!(doc["schema"], "v1");
    for c in doc["checks"].as_array().unwrap() {
        assert_ne!(c["verdict"], "fail", "{c}");
        if c["verdict"] == "pass" {
            assert!(c["max_residual"].as_f64().unwrap() <= c["tolerance"].as_f64().unwrap());
        }
    }
}

#[test]
fn violator_names_indices_and_point() {
    let (code, doc) = json_report(&["robertson", "--example", "robertson_violator"]);
    assert_eq!(code, 1);
    let gamma = doc["checks"].as_array().unwrap().iter().find(|c| c["name"] == "robertson.gamma").unwrap();
    assert_eq!(gamma["verdict"], "fail");
    assert!(gamma["notes"].as_str().unwrap().contains("(alpha, beta, i, j) = ("));
    assert_eq!(gamma["worst_point"].as_array().unwrap().len(), 3);
}

#[test]
fn vandermonde_ricci_below_threshold() {
    let (code, doc) = json_report(&["ricci", "--example", "vandermonde3"]);
    assert_eq!(code, 0);
    let off = doc["checks"].as_array().unwrap().iter().find(|c| c["name"] == "ricci.offblock").unwrap();
    assert!(off["max_residual"].as_f64().unwrap() < 1e-8);
}

#[test]
fn robertson_exit_codes_follow_catalogue() {
    for e in catalogue().unwrap() {
        let code = painleve(&["robertson", "--example", &e.name, "--samples", "16"]).status.code().unwrap();
        assert_eq!(code, if e.expected.robertson { 0 } else { 1 }, "{}", e.name);
    }
}

#[test]
fn exported_spec_reproduces_verdicts() {
    let text = String::from_utf8(painleve(&["catalogue", "di_pirro"]).stdout).unwrap();
    let path = scratch("di_pirro.json", &text);
    let (c1, from_file) = json_report(&["killing", path.to_str().unwrap(), "--samples", "8"]);
    let (c2, builtin) = json_report(&["killing", "--example", "di_pirro", "--samples", "8"]);
    assert_eq!(c1, c2);
    let verdicts = |d: &Value| d["checks"].as_array().unwrap().iter().map(|c| c["verdict"].clone()).collect::<Vec<_>>();
    assert_eq!(verdicts(&from_file), verdicts(&builtin));
}

#[test]
fn input_errors_exit_two() {
    let bad_parse = scratch(
        "parse.json",
        r#"{"chart": {"variables": ["x1", "x2"], "blocks": [["x1"], ["x2"]], "domain": {"x1": [-1, 1], "x2": [-1, 1]}},
            "stackel": [["1", "-1"], ["sin(x2", "1"]], "block_metrics": [[["1"]], [["1"]]]}"#,
    );
    let undefined = scratch(
        "undefined.json",
        r#"{"chart": {"variables": ["x1", "x2"], "blocks": [["x1"], ["x2"]], "domain": {"x1": [-1, 1], "x2": [-1, 1]}},
            "stackel": [["2 + x1", "-1"], ["sqrt(x2 - 3)", "1"]], "block_metrics": [[["1"]], [["1"]]]}"#,
    );
    let garbage = scratch("garbage.json", "{ not json");
    for args in [
        vec!["validate", bad_parse.to_str().unwrap()],
        vec!["report", undefined.to_str().unwrap()],
        vec!["validate", garbage.to_str().unwrap()],
        vec!["validate", "--example", "no_such_entry"],
        vec!["validate", "/no/such/file.json"],
        vec!["validate", "--example", "euclidean2", "--tol-scale", "-1"],
    ] {
        let out = painleve(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let err = String::from_utf8(painleve(&["validate", bad_parse.to_str().unwrap()]).stderr).unwrap();
    assert!(err.contains("stackel[1][0]"), "{err}");
}

#[test]
fn non_stackel_data_fails_validation() {
    let path = scratch(
        "mixed.json",
        r#"{"chart": {"variables": ["x1", "x2"], "blocks": [["x1"], ["x2"]], "domain": {"x1": [-1, 1], "x2": [-1, 1]}},
            "stackel": [["2 + x2", "-1"], ["1", "1"]], "block_metrics": [[["1"]], [["1"]]]}"#,
    );
    let (code, doc) = json_report(&["validate", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert_eq!(doc["checks"][0]["name"], "validate.definition");
    assert_eq!(doc["checks"][0]["verdict"], "fail");
}

#[test]
fn seed_and_tolerance_are_recorded() {
    let (_, a) = json_report(&["killing", "--example", "liouville2d", "--seed", "3", "--samples", "8", "--tol-scale", "10"]);
    assert_eq!(a["seed"], 3);
    assert_eq!(a["tol_scale"], 10.0);
    let poisson = a["checks"].as_array().unwrap().iter().find(|c| c["name"] == "killing.poisson").unwrap();
    assert!((poisson["tolerance"].as_f64().unwrap() - 1e-8).abs() < 1e-20);
    let (_, b) = json_report(&["killing", "--example", "liouville2d", "--seed", "4", "--samples", "8", "--tol-scale", "10"]);
    assert_ne!(a["checks"][0]["worst_point"], b["checks"][0]["worst_point"]);
}

#[test]
fn csv_exports() {
    let dir = std::env::temp_dir().join(format!("painleve-csv-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let traj = dir.join("traj.csv");
    let out = painleve(&["geodesic", "--example", "liouville2d", "--t-end", "1", "--dt", "0.01", "--csv", traj.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&traj).unwrap();
    assert!(text.starts_with("t,x1,x2,p1,p2,H,K2\n"));
    assert_eq!(text.lines().count(), 102);

    let spec = scratch(
        "conformal.json",
        r#"{"name": "flat-conformal",
            "chart": {"variables": ["x1", "x2", "x3"], "blocks": [["x1"], ["x2", "x3"]],
                      "domain": {"x1": [-0.5, 0.5], "x2": [-0.5, 0.5], "x3": [-0.5, 0.5]}},
            "stackel": [["1", "-1"], ["0", "1"]],
            "block_metrics": [[["1"]], [["1", "0"], ["0", "1"]]],
            "conformal": {"c": "1", "lambda": 1.0, "a1": 1.0, "phi": ["0", "0"]}}"#,
    );
    let grid = dir.join("grid.csv");
    let out = painleve(&["conformal", spec.to_str().unwrap(), "--csv", grid.to_str().unwrap(), "--samples", "8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let text = std::fs::read_to_string(&grid).unwrap();
    assert!(text.starts_with("x1,x2,"));
    assert_eq!(text.lines().count(), 33 * 33 + 1);
}
