use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn fom(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fom"))
        .args(args)
        .output()
        .expect("fom runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn schema(name: &str) -> Value {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(name);
    serde_json::from_str(&std::fs::read_to_string(path).expect("schema file")).expect("schema is JSON")
}

fn assert_valid(schema_name: &str, document: &Value) {
    let validator = jsonschema::validator_for(&schema(schema_name)).expect("schema compiles");
    let errors: Vec<String> = validator.iter_errors(document).map(|e| e.to_string()).collect();
    assert!(errors.is_empty(), "{schema_name}: {errors:?}");
}

fn json_of(args: &[&str]) -> (Value, i32) {
    let out = fom(args);
    (serde_json::from_slice(&out.stdout).expect("JSON output"), code(&out))
}

#[test]
fn bound_examples() {
    for (args, expected) in [
        (vec!["bound", "--lambda", "7.233629"], "0.631744"),
        (
            vec!["bound", "--lambda", "2.87586", "--gammas", "3.24985,2.40342,7.86407"],
            "0.629674",
        ),
        (vec!["bound", "--lambda", "2"], "0.638817"),
    ] {
        let out = fom(&args);
        assert_eq!(code(&out), 0);
        assert_eq!(stdout(&out).trim(), expected, "{args:?}");
    }
}

#[test]
fn bound_accepts_fractions_and_formulas() {
    let general = stdout(&fom(&["bound", "--lambda", "7/2"]));
    let l0 = stdout(&fom(&["bound", "--lambda", "3.5", "--formula", "l0"]));
    assert_eq!(general, l0);
    let args = ["--lambda", "2.87586", "--gammas", "3.24985,2.40342,7.86407"];
    let l3 = stdout(&fom(&[&["bound"][..], &args, &["--formula", "l3"]].concat()));
    assert_eq!(l3.trim(), "0.629674");
}

#[test]
fn bound_rejects_parameters_at_most_one() {
    assert_eq!(code(&fom(&["bound", "--lambda", "1"])), 2);
    assert_eq!(code(&fom(&["bound", "--lambda", "2", "--gammas", "0.5"])), 2);
    assert_eq!(code(&fom(&["bound", "--lambda", "abc"])), 2);
    assert_eq!(
        code(&fom(&["bound", "--lambda", "2", "--gammas", "3", "--formula", "l0"])),
        2
    );
}

#[test]
fn bound_json_has_both_precisions() {
    let (doc, status) = json_of(&["bound", "--lambda", "7.233629", "--format", "json"]);
    assert_eq!(status, 0);
    assert_valid("bound.schema.json", &doc);
    assert_eq!(doc["value_rounded"], "0.631744");
    assert!((doc["value"].as_f64().unwrap() - 0.631744).abs() < 5e-7);
}

#[test]
fn bound_csv_has_header() {
    let out = stdout(&fom(&["bound", "--lambda", "3", "--gammas", "2,4", "--format", "csv"]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("ell,lambda,gamma_1,gamma_2,value"));
    assert!(lines.next().unwrap().starts_with("2,3.000000,2.000000,4.000000,0."));
}

#[test]
fn optimize_examples() {
    let out = fom(&["optimize", "--ell", "0", "--format", "csv"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.lines().nth(1).unwrap().ends_with(",0.631744"), "{text}");

    let basin = fom(&[
        "optimize",
        "--ell",
        "0",
        "--restarts",
        "1",
        "--init",
        "2.0",
        "--format",
        "csv",
    ]);
    assert_eq!(code(&basin), 0);
    assert_eq!(stdout(&basin), text);

    let table = fom(&["optimize", "--table", "--max-ell", "3", "--format", "csv"]);
    assert_eq!(code(&table), 0);
    let table = stdout(&table);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "ell,lambda,gamma_1,gamma_2,gamma_3,value");
    assert_eq!(lines.len(), 5);
    assert!(lines[4].ends_with(",0.629674"));
}

#[test]
fn optimize_json_validates() {
    let (doc, status) = json_of(&["optimize", "--table", "--max-ell", "2", "--format", "json"]);
    assert_eq!(status, 0);
    assert_valid("optimize.schema.json", &doc);
    assert_eq!(doc["rows"].as_array().unwrap().len(), 3);
    assert_eq!(doc["converged"], true);
}

#[test]
fn optimize_usage_errors() {
    assert_eq!(code(&fom(&["optimize"])), 2);
    assert_eq!(code(&fom(&["optimize", "--ell", "1", "--init", "2.0"])), 2);
    assert_eq!(code(&fom(&["optimize", "--ell", "0", "--init", "0.5"])), 2);
    assert_eq!(code(&fom(&["optimize", "--ell", "0", "--restarts", "0"])), 2);
    assert_eq!(code(&fom(&["optimize", "--table"])), 2);
}

#[test]
fn optimize_csv_is_deterministic() {
    let args = [
        "optimize",
        "--table",
        "--max-ell",
        "4",
        "--format",
        "csv",
        "--full-precision",
    ];
    assert_eq!(fom(&args).stdout, fom(&args).stdout);
}

#[test]
fn simulate_waterfilling_matches_recurrence() {
    let (doc, status) = json_of(&[
        "simulate",
        "--h",
        "3",
        "--lambda",
        "2",
        "--alg",
        "waterfilling",
        "--format",
        "json",
    ]);
    assert_eq!(status, 0);
    assert_valid("simulation.schema.json", &doc);
    let p: Vec<&str> = doc["report"]["p"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(p, ["0", "1/3", "2/9", "7/27"]);
    assert_eq!(doc["passed"], true);
}

#[test]
fn simulate_random_passes_budgets() {
    let out = fom(&["simulate", "--h", "2", "--lambda", "2", "--alg", "random:42"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out)
        .lines()
        .any(|l| l.starts_with("budgets") && l.ends_with("pass")));
}

#[test]
fn simulate_small_triangle_ratio() {
    let (doc, status) = json_of(&[
        "simulate",
        "--h",
        "0",
        "--scale",
        "2",
        "--alg",
        "waterfilling",
        "--format",
        "json",
    ]);
    assert_eq!(status, 0);
    assert_eq!(doc["report"]["ratio"], "3/4");
}

#[test]
fn simulate_csv_is_deterministic_with_header() {
    let args = [
        "simulate",
        "--h",
        "3",
        "--lambda",
        "2",
        "--gammas",
        "3",
        "--alg",
        "random:7",
        "--format",
        "csv",
        "--full-precision",
    ];
    let first = fom(&args);
    assert_eq!(code(&first), 0);
    assert_eq!(first.stdout, fom(&args).stdout);
    let text = stdout(&first);
    assert!(text.starts_with("level,size,p,q,"));
    assert_eq!(text.lines().count(), 1 + 5);
}

#[test]
fn simulate_usage_errors() {
    assert_eq!(code(&fom(&["simulate", "--h", "2", "--alg", "greedy"])), 2);
    assert_eq!(code(&fom(&["simulate", "--h", "2", "--lambda", "1"])), 2);
    assert_eq!(
        code(&fom(&["simulate", "--h", "2", "--lambda", "5/2", "--scale", "0"])),
        2
    );
}

#[test]
fn instance_file_round_trips_through_simulate() {
    let dir = tempfile::tempdir().unwrap();
    let instance = dir.path().join("instance.json");
    let path = instance.to_str().unwrap();
    let out = fom(&[
        "export", "instance", "--h", "2", "--lambda", "5/2", "--gammas", "3", "--scale", "2", "-o", path,
    ]);
    assert_eq!(code(&out), 0);
    let doc: Value = serde_json::from_str(&std::fs::read_to_string(&instance).unwrap()).unwrap();
    assert_valid("instance.schema.json", &doc);
    assert_eq!(doc["scale_multiplier"], 2);

    let from_file = fom(&["simulate", "--params", path, "--format", "csv", "--full-precision"]);
    let from_flags = fom(&[
        "simulate",
        "--h",
        "2",
        "--lambda",
        "2.5",
        "--gammas",
        "3",
        "--scale",
        "2",
        "--format",
        "csv",
        "--full-precision",
    ]);
    assert_eq!(code(&from_file), 0);
    assert_eq!(from_file.stdout, from_flags.stdout);
}

#[test]
fn trace_is_json_lines() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.jsonl");
    let out = fom(&["simulate", "--h", "1", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    let events: Vec<Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!events.is_empty());
    assert!(events.iter().all(|e| e.get("event").is_some()));
}

#[test]
fn schedule_export_validates() {
    let (doc, status) = json_of(&[
        "export", "schedule", "--h", "2", "--lambda", "2", "--gammas", "3/2", "--scale", "2", "--format", "json",
    ]);
    assert_eq!(status, 0);
    assert_valid("schedule.schema.json", &doc);
    let phases = doc["phases"].as_array().unwrap();
    assert_eq!(phases.last().unwrap()["kind"], "final");
    let csv = stdout(&fom(&["export", "schedule", "--h", "1", "--format", "csv"]));
    assert!(csv.starts_with("phase,index,first_id,end_id,n_current,n_next,factor\n"));
}

#[test]
fn exported_schemas_match_shipped_files() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        code(&fom(&["export", "schemas", "--dir", dir.path().to_str().unwrap()])),
        0
    );
    for entry in std::fs::read_dir(dir.path()).unwrap() {
        let entry = entry.unwrap();
        let exported: Value = serde_json::from_str(&std::fs::read_to_string(entry.path()).unwrap()).unwrap();
        assert_eq!(exported, schema(entry.file_name().to_str().unwrap()));
    }
}

#[test]
fn quick_check_passes_and_validates() {
    let (doc, status) = json_of(&["check", "--quick", "--format", "json"]);
    assert_eq!(status, 0);
    assert_valid("check.schema.json", &doc);
    assert_eq!(doc["passed"], true);
}

#[test]
fn output_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bound.csv");
    let out = fom(&[
        "bound",
        "--lambda",
        "2",
        "--format",
        "csv",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);
    assert!(out.stdout.is_empty());
    assert!(std::fs::read_to_string(path).unwrap().ends_with(",0.638817\n"));
}
