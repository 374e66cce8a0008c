use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{
  "scenario": {
    "topology": {"base": {"kind": "preset", "name": "desk10"}},
    "trace": {"history_slots": 300, "test_slots": 120, "lambda": 2.0},
    "plan": {"resamples": 100},
    "window": {"start": 20, "end": 100},
    "check_invariants": true,
    "timing": false
  },
  "algorithms": ["olive", "quickg", "slotoff"],
  "seeds": [1, 2],
  "utilizations": [1.0, 1.4],
  "jobs": 1
}"#;

fn olive(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_olive"))
        .args(args)
        .arg("--out")
        .arg(dir.join("out"))
        .env("RUST_LOG", "warn")
        .env_remove("OLIVE_SEEDS")
        .env_remove("OLIVE_OUT")
        .output()
        .expect("running olive")
}

fn config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn results(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().skip(1).map(String::from).collect();
    lines.sort();
    lines
}

#[test]
fn full_pipeline_then_resume() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, SMALL);
    let out = olive(dir, &["run", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    // 3 algorithms x 2 seeds x 2 utilizations.
    let rows = results(dir);
    assert_eq!(rows.len(), 12);
    for f in ["topology/seed-1.json", "cells/seed-2/u140/plan.json", "events/olive-seed-1-u100.csv", "slots/slotoff-seed-2-u140.csv", "summary.csv"] {
        assert!(dir.join("out").join(f).is_file(), "{f}");
    }
    let report = String::from_utf8_lossy(&out.stdout);
    assert!(report.contains("quickg") && report.contains("140%"), "{report}");

    // Cut the file back to the header, two rows and half of a third, as an
    // interrupted run would leave it.
    let text = fs::read_to_string(dir.join("out/results.csv")).unwrap();
    let keep: Vec<&str> = text.lines().take(3).collect();
    let torn = text.lines().nth(3).unwrap();
    fs::write(dir.join("out/results.csv"), format!("{}\n{}", keep.join("\n"), &torn[..torn.len() / 2])).unwrap();
    let out = olive(dir, &["simulate", "--config", &cfg]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(results(dir), rows);

    // Nothing left to do: a second resume adds no rows.
    let out = olive(dir, &["simulate", "--config", &cfg]);
    assert!(out.status.success());
    assert_eq!(results(dir), rows);
}

#[test]
fn plan_is_byte_identical_on_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, SMALL);
    for cmd in ["gen-topology", "gen-trace", "plan"] {
        let out = olive(dir, &[cmd, "--config", &cfg, "--seed", "3", "--util", "120"]);
        assert!(out.status.success(), "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let path = dir.join("out/cells/seed-3/u120/plan.json");
    let first = fs::read(&path).unwrap();
    let out = olive(dir, &["plan", "--config", &cfg, "--seed", "3", "--util", "120"]);
    assert!(out.status.success());
    assert_eq!(fs::read(&path).unwrap(), first);
}

#[test]
fn missing_plan_exits_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, SMALL);
    for cmd in ["gen-topology", "gen-trace"] {
        assert!(olive(dir, &[cmd, "--config", &cfg, "--seed", "1", "--util", "100"]).status.success());
    }
    let out = olive(dir, &["simulate", "--config", &cfg, "--seed", "1", "--util", "100", "--algos", "olive"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("plan"));
    // Baselines do not need a plan.
    let out = olive(dir, &["simulate", "--config", &cfg, "--seed", "1", "--util", "100", "--algos", "quickg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_topology_and_results_exit_with_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, SMALL);
    assert_eq!(olive(dir, &["gen-trace", "--config", &cfg]).status.code(), Some(3));
    assert_eq!(olive(dir, &["report", "--config", &cfg]).status.code(), Some(3));
    let bad = config(dir, r#"{"topology_file": "nowhere.json"}"#);
    assert_eq!(olive(dir, &["gen-topology", "--config", &bad]).status.code(), Some(3));
}

#[test]
fn empty_history_makes_olive_behave_like_quickg() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, &SMALL.replace(r#""history_slots": 300"#, r#""history_slots": 0"#));
    let out = olive(dir, &["run", "--config", &cfg, "--seed", "1", "--util", "140", "--algos", "olive,quickg"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let plan = fs::read_to_string(dir.join("out/cells/seed-1/u140/plan.json")).unwrap();
    assert!(plan.contains(r#""aggregates":[]"#), "{plan}");
    let rows = results(dir);
    let metrics = |r: &str| r.split(',').skip(1).collect::<Vec<_>>().join(",");
    assert_eq!(rows.len(), 2);
    assert_eq!(metrics(&rows[0]), metrics(&rows[1]));
}

#[test]
fn env_overrides_seeds_and_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, SMALL);
    let out = Command::new(env!("CARGO_BIN_EXE_olive"))
        .args(["gen-topology", "--config", &cfg])
        .env("OLIVE_SEEDS", "7-8")
        .env("OLIVE_OUT", dir.join("elsewhere"))
        .env("RUST_LOG", "warn")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.join("elsewhere/topology/seed-7.json").is_file());
    assert!(dir.join("elsewhere/topology/seed-8.json").is_file());
    assert!(!dir.join("elsewhere/topology/seed-1.json").exists());
}

#[test]
fn bad_arguments_fail() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = config(dir, SMALL);
    let out = olive(dir, &["gen-topology", "--config", &cfg, "--seed", "1,1"]);
    assert_eq!(out.status.code(), Some(1));
    let out = olive(dir, &["simulate", "--config", &cfg, "--algos", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}
