use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jacobi_index_cli::RunReport;
use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_jacobi-index"));
    c.env_remove("JACOBI_INDEX_OUT_DIR");
    c
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write_config(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(config: &Path, extra: &[&str]) -> Output {
    bin().arg("run").arg(config).args(extra).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn strip_timing(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timing_s");
            map.values_mut().for_each(strip_timing);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

#[test]
fn theorem_a_csv_has_one_row_with_zero_slack() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(&dir, "a.json", r#"{"scenario": "theorem_A", "model": "s3_s2"}"#);
    let out = run(&cfg, &["--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut rows = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rows.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["scenario", "id", "lhs", "rhs", "slack", "pass", "time", "multiplicity"]);
    let records: Vec<_> = rows.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), 1);
    assert_eq!(&records[0][0], "theorem_A");
    assert_eq!(records[0][4].parse::<f64>().unwrap(), 0.0);
    assert_eq!(&records[0][5], "true");
}

#[test]
fn bundled_index_config_counts_closed_form_zeros() {
    let out = run(&configs().join("index_l0.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    let totals: Vec<u64> = v["results"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["indices"][0]["total"].as_u64().unwrap())
        .collect();
    assert_eq!(totals, [4, 0, 3]);
}

#[test]
fn empty_suite_passes() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "s.json",
        r#"{"scenario": "random_suite", "kind": "lytchak", "seed": 1, "trials": 0}"#,
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["results"][0]["verdicts"], Value::Array(vec![]));
    assert_eq!(v["root_seed"], 1);
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "s.json",
        r#"{"scenarios": [
            {"scenario": "random_suite", "kind": "lytchak", "seed": 5, "trials": 6},
            {"scenario": "random_suite", "kind": "periodic_upper", "seed": 5, "trials": 2}
        ]}"#,
    );
    let mut a = json(&run(&cfg, &[]));
    let mut b = json(&run(&cfg, &[]));
    strip_timing(&mut a);
    strip_timing(&mut b);
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    let mut c = json(&run(&cfg, &["--seed", "6"]));
    strip_timing(&mut c);
    assert_eq!(c["root_seed"], 6);
    assert_ne!(a["results"], c["results"]);
}

#[test]
fn json_report_round_trips() {
    let out = run(&configs().join("inequalities.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let report: RunReport = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report.results.len(), 4);
    let again: RunReport = serde_json::from_str(&report.to_json()).unwrap();
    assert_eq!(report, again);
    let slacks: Vec<f64> = report.results.iter().map(|r| r.verdicts[0].slack).collect();
    assert_eq!(slacks, [0.0, 0.0, 6.0, 0.0]);
}

#[test]
fn exit_codes_follow_severity() {
    let dir = TempDir::new().unwrap();
    let cases = [
        (
            r#"{"scenario": "index", "system": {"kind": "constant", "delta": 1, "m": 2},
                "subspace": {"kind": "vanishing"}, "interval": "[0, pi]", "expect": 5}"#,
            1,
        ),
        (
            r#"{"scenario": "inequality", "kind": "delta_lower", "system": {"kind": "constant", "delta": 1, "m": 2},
                "subspace": {"kind": "vanishing"}, "r": 1, "delta": 2}"#,
            2,
        ),
        (
            r#"{"scenario": "index", "system": {"kind": "constant", "delta": 1, "m": 2},
                "subspace": {"kind": "basis", "columns": [[1, 0, 0, 0], [1, 1e-10, 0, 0]]}, "interval": "[0, 1]"}"#,
            3,
        ),
        (r#"{"scenario": "theorem_A", "model": "s5_s4"}"#, 4),
        (r#"{"scenario": "random_suite", "kind": "lytchak", "trials": 2}"#, 4),
    ];
    for (i, (body, code)) in cases.iter().enumerate() {
        let cfg = write_config(&dir, &format!("c{i}.json"), body);
        let out = run(&cfg, &[]);
        assert_eq!(out.status.code(), Some(*code), "case {i}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let out = bin().args(["run", "--format", "xml", "x.json"]).output().unwrap();
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn missing_field_is_reported_with_its_path() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(
        &dir,
        "c.json",
        r#"{"scenarios": [{"scenario": "theorem_A", "model": "s3_s2"}, {"scenario": "span", "model": "s3_s2", "subspace": {"kind": "lifted"}}]}"#,
    );
    let out = run(&cfg, &[]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenarios[1].delta"));
}

#[test]
fn trace_vanishes_at_the_zeros_of_sine() {
    let dir = TempDir::new().unwrap();
    let out_path = dir.path().join("trace.csv");
    let out = bin()
        .arg("trace")
        .arg(configs().join("trace_l0.json"))
        .arg("--out")
        .arg(&out_path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let mut rows = csv::Reader::from_path(&out_path).unwrap();
    let pts: Vec<(f64, f64)> = rows
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect();
    assert!(pts.len() > 100);
    let near = |t0: f64| pts.iter().filter(|p| (p.0 - t0).abs() < 1e-9).map(|p| p.1).fold(f64::INFINITY, f64::min);
    assert!(near(0.0) <= 1e-10);
    assert!(near(std::f64::consts::PI) <= 1e-10);
    let mid = pts.iter().find(|p| (p.0 - std::f64::consts::FRAC_PI_2).abs() < 0.05).unwrap();
    assert!(mid.1 > 0.9);
}

#[test]
fn output_directory_from_environment() {
    let dir = TempDir::new().unwrap();
    let out = bin()
        .env("JACOBI_INDEX_OUT_DIR", dir.path())
        .arg("run")
        .arg(configs().join("theorem_b_chain.json"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty());
    let written = std::fs::read_to_string(dir.path().join("theorem_b_chain.json")).unwrap();
    let report: RunReport = serde_json::from_str(&written).unwrap();
    let v = &report.results[0].verdicts;
    assert_eq!((v[0].lhs, v[0].rhs, v[0].slack), (1.0, 2.0, 1.0));
    assert!(v.iter().all(|x| x.pass));
}

#[test]
fn list_models_names_the_hopf_fibrations() {
    let out = bin().arg("list-models").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let names: Vec<&str> = v.as_array().unwrap().iter().map(|m| m["name"].as_str().unwrap()).collect();
    assert_eq!(names, ["s3_s2", "s7_s4", "s15_s8"]);
    assert_eq!(v[1]["k"], 3);
}
