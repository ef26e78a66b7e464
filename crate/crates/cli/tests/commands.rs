use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const PROGRAM: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/benchmark.dpl");

fn dpl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dpl")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = dpl(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small benchmark written as train/test files.
fn small_benchmark(dir: &Path, seed: u64) -> (PathBuf, PathBuf) {
    let spec = dir.join("spec.json");
    let mut value: Value =
        serde_json::from_str(&fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/benchmark.json")).unwrap())
            .unwrap();
    value["n"] = 1500.into();
    value["seed"] = seed.into();
    fs::write(&spec, value.to_string()).unwrap();
    let (train, test) = (dir.join("train.jsonl"), dir.join("test.jsonl"));
    ok(&["synth", "--spec", s(&spec), "--out", s(&train), "--test-out", s(&test)]);
    (train, test)
}

fn read_json(p: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn synth_is_deterministic_and_writes_gold_sidecar() {
    let dir = TempDir::new().unwrap();
    let spec = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/benchmark.json");
    let (a, b) = (dir.path().join("a.jsonl"), dir.path().join("b.jsonl"));
    ok(&["synth", "--spec", spec, "--out", s(&a)]);
    ok(&["synth", "--spec", spec, "--out", s(&b)]);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    let gold = fs::read_to_string(dir.path().join("a.jsonl.gold.jsonl")).unwrap();
    assert_eq!(gold.lines().count(), 20_000);
    assert!(gold.starts_with("{\"gold\":"));
}

#[test]
fn invalid_spec_fails_with_message() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    fs::write(&spec, r#"{"n": 10, "d": 2, "concept": "xor2", "kbCoverage": 2.0, "kbNoise": 0.1, "seed": 1}"#).unwrap();
    let out = dpl(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("x.jsonl"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("kbCoverage"));
}

#[test]
fn train_writes_model_trace_and_report() {
    let dir = TempDir::new().unwrap();
    let (train, test) = small_benchmark(dir.path(), 1);
    let out = dir.path().join("run");
    ok(&["train", "--program", PROGRAM, "--data", s(&train), "--test", s(&test), "--out", s(&out), "--seed", "4"]);
    let trace = read_json(&out.join("trace.json"));
    assert_eq!(trace["iterations"].as_array().unwrap().len(), 3);
    assert_eq!(trace["learnedWeights"].as_object().unwrap().len(), 6);
    let report = read_json(&out.join("report.json"));
    assert!(report["evaluation"]["f1"].as_f64().unwrap() > 0.5);
    assert!(report["evaluation"]["samplePrecision"].is_number());
    let model = read_json(&out.join("model.json"));
    assert_eq!(model["kind"], "logreg");
    assert_eq!(model["trainedEpochs"], 30);
}

#[test]
fn missing_program_is_a_config_error() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_benchmark(dir.path(), 1);
    let out = dpl(&["train", "--program", "/no/such.dpl", "--data", s(&train), "--out", s(dir.path()), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("program not found"));
}

#[test]
fn bad_program_and_flags_are_config_errors() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_benchmark(dir.path(), 1);
    let program = dir.path().join("bad.dpl");
    fs::write(&program, "1.0: vote(+no_such_field)\n").unwrap();
    let out = dpl(&["train", "--program", s(&program), "--data", s(&train), "--out", s(dir.path()), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
    let out = dpl(&["train", "--program", PROGRAM, "--data", s(&train), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2), "seed is mandatory");
}

#[test]
fn contradictory_program_is_a_runtime_error() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_benchmark(dir.path(), 1);
    let program = dir.path().join("contra.dpl");
    fs::write(&program, "hard: vote(+kb_match)\nhard: vote(-kb_match)\n").unwrap();
    let out = dpl(&["train", "--program", s(&program), "--data", s(&train), "--out", s(dir.path()), "--seed", "1"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("contradictory constraints"));
}

#[test]
fn single_iteration_without_weight_steps_is_plain_distillation() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_benchmark(dir.path(), 2);
    let out = dir.path().join("run");
    ok(&[
        "train", "--program", PROGRAM, "--data", s(&train), "--out", s(&out), "--seed", "1", "--em-iters", "1",
        "--weight-steps", "0",
    ]);
    let trace = read_json(&out.join("trace.json"));
    let iterations = trace["iterations"].as_array().unwrap();
    assert_eq!(iterations.len(), 1);
    assert_eq!(iterations[0]["weightStepsAccepted"], 0);
    assert_eq!(trace["learnedWeights"]["kb_positive"].as_f64(), Some(1.0));
}

#[test]
fn ablation_without_ji_rules_repeats_the_dp_row() {
    let dir = TempDir::new().unwrap();
    let (train, test) = small_benchmark(dir.path(), 3);
    let program = dir.path().join("no_ji.dpl");
    let text: String = fs::read_to_string(PROGRAM).unwrap().split("# tag: JI").next().unwrap().to_string();
    fs::write(&program, text).unwrap();
    let out = dir.path().join("abl");
    let stdout = ok(&["ablate", "--program", s(&program), "--data", s(&train), "--test", s(&test), "--out", s(&out), "--seed", "2"]).stdout;
    let table = read_json(&out.join("ablation.json"));
    let rows = table["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1]["evaluation"], rows[2]["evaluation"]);
    assert_eq!(rows[1]["learnedWeights"], rows[2]["learnedWeights"]);
    let printed = String::from_utf8(stdout).unwrap();
    assert_eq!(printed, fs::read_to_string(out.join("ablation.txt")).unwrap());
    assert!(printed.contains("DS+DP+JI"));
}

#[test]
fn ablate_requires_a_test_set() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_benchmark(dir.path(), 3);
    let out = dpl(&["ablate", "--program", PROGRAM, "--data", s(&train), "--out", s(dir.path()), "--seed", "2"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn infer_thresholds_and_edge_cases() {
    let dir = TempDir::new().unwrap();
    let (train, test) = small_benchmark(dir.path(), 4);
    let run = dir.path().join("run");
    ok(&["train", "--program", PROGRAM, "--data", s(&train), "--out", s(&run), "--seed", "1"]);
    let model = run.join("model.json");
    let positives = |threshold: &str| {
        let pred = dir.path().join(format!("pred_{threshold}.jsonl"));
        ok(&["infer", "--model", s(&model), "--data", s(&test), "--out", s(&pred), "--threshold", threshold]);
        let lines: Vec<Value> =
            fs::read_to_string(&pred).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        for l in &lines {
            let p1 = l["p1"].as_f64().unwrap();
            let t: f64 = threshold.parse().unwrap();
            assert_eq!(l["label"].as_u64().unwrap(), u64::from(p1 >= t));
        }
        lines.iter().filter(|l| l["label"] == 1).count()
    };
    assert!(positives("0.3") >= positives("0.5"));

    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let pred = dir.path().join("empty_pred.jsonl");
    ok(&["infer", "--model", s(&model), "--data", s(&empty), "--out", s(&pred)]);
    assert_eq!(fs::read_to_string(&pred).unwrap(), "");

    let narrow = dir.path().join("narrow.jsonl");
    fs::write(&narrow, "{\"d\":2,\"fields\":{}}\n{\"id\":\"a\",\"x\":[1.0,2.0],\"fields\":{}}\n").unwrap();
    let out = dpl(&["infer", "--model", s(&model), "--data", s(&narrow), "--out", s(&pred)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("dimension mismatch"));
}

#[test]
fn stats_reports_grounding_shape() {
    let dir = TempDir::new().unwrap();
    let (train, _) = small_benchmark(dir.path(), 5);
    let out = ok(&["stats", "--program", PROGRAM, "--data", s(&train)]);
    let stats: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(stats["isTree"], true);
    assert_eq!(stats["predictorPrior"], 0);
    assert!(stats["atLeastOne"].as_u64().unwrap() > 0);
}
