use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn sphere(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sphere")).args(args).current_dir(cwd).env_remove("SPHERE_DATA_DIR").output().unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn tiny_config() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/tiny.cfg").to_string_lossy().into_owned()
}

#[test]
fn verify_lemma_meets_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out = sphere(&["verify-lemma", "--B", "64", "--N", "32", "--M", "8", "--seed", "1", "--out", "run"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = json(&dir.path().join("run/summary.json"));
    assert_eq!(s["schema_version"], 1);
    let lemma = &s["result"]["lemma"];
    assert!(lemma["ratio"].as_f64().unwrap() <= 1.05);
    assert!(lemma["achieved"].as_f64().unwrap() > 0.0 && lemma["oracle"].as_f64().unwrap() > 0.0);
    let m = json(&dir.path().join("run/manifest.json"));
    assert_eq!(m["seed"], 1);
    assert!(m["config"].as_str().unwrap().contains("width = 8"));
    assert!(m["git_describe"].is_string());
}

#[test]
fn gradcheck_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = sphere(&["gradcheck", "--out", "gc"], dir.path());
    assert!(out.status.success());
    let s = json(&dir.path().join("gc/summary.json"));
    let rows = s["result"]["rows"].as_array().unwrap();
    assert!(rows.len() > 10);
    assert!(rows.iter().all(|r| r["passed"] == true));
}

#[test]
fn missing_config_gives_error_record() {
    let dir = tempfile::tempdir().unwrap();
    let out = sphere(&["train", "--config", "missing.cfg", "--out", "bad"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec: Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(rec["kind"], "config");
    assert_eq!(rec["status"], "error");
    assert_eq!(json(&dir.path().join("bad/error.json")), rec);
}

#[test]
fn config_errors_carry_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "[optim]\nlr = 1e-3\nbogus = 2\n").unwrap();
    let out = sphere(&["train", "--config", "c.cfg", "--out", "bad"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let rec = json(&dir.path().join("bad/error.json"));
    assert_eq!((rec["line"].as_u64(), rec["column"].as_u64()), (Some(3), Some(1)));
}

#[test]
fn missing_dataset_reports_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = sphere(&["train", "--out", "r", "data.dir=nowhere"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let rec = json(&dir.path().join("r/error.json"));
    assert_eq!(rec["kind"], "dataset_missing");
    assert!(rec["message"].as_str().unwrap().contains("data_batch_1.bin"), "{rec}");
}

#[test]
fn data_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sphere"))
        .args(["train", "--out", "r"])
        .current_dir(dir.path())
        .env("SPHERE_DATA_DIR", dir.path().join("from-env"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
    assert!(json(&dir.path().join("r/error.json"))["message"].as_str().unwrap().contains("from-env"));
}

#[test]
fn identical_manifests_give_identical_summaries() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = tiny_config();
    for (cmd, runs) in [("train", ["a", "b"]), ("probe", ["p1", "p2"]), ("oja-demo", ["o1", "o2"])] {
        for run in runs {
            let out = sphere(&[cmd, "--config", &cfg, "--out", run], dir.path());
            assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
        }
        let read = |run: &str, f: &str| std::fs::read(dir.path().join(run).join(f)).unwrap();
        assert_eq!(read(runs[0], "manifest.json"), read(runs[1], "manifest.json"));
        assert_eq!(read(runs[0], "summary.json"), read(runs[1], "summary.json"), "{cmd}");
    }
    let metrics = std::fs::read_to_string(dir.path().join("a/metrics.jsonl")).unwrap();
    let first: Value = serde_json::from_str(metrics.lines().next().unwrap()).unwrap();
    for key in ["block", "epoch", "sphere", "orth", "total", "lr", "wall_ms"] {
        assert!(first.get(key).is_some(), "{key}");
    }
}

#[test]
fn unknown_override_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let out = sphere(&["oja-demo", "--out", "o", "oja.nope=1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
