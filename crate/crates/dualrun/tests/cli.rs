use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

use dualrun_core::model::{Mode, RunRecord};

fn dualrun(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dualrun")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the bundled suite under `dir` and a manifest restricted to `ids`.
fn suite(dir: &Path, ids: &[&str]) -> PathBuf {
    let root = dir.join("suite");
    let out = dualrun(&["init-fixtures", "--out", s(&root)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let all: Vec<Value> = serde_json::from_str(&fs::read_to_string(root.join("manifest.json")).unwrap()).unwrap();
    let picked: Vec<&Value> = all.iter().filter(|p| ids.contains(&p["id"].as_str().unwrap())).collect();
    let manifest = root.join("manifest-sub.json");
    fs::write(&manifest, serde_json::to_string(&picked).unwrap()).unwrap();
    manifest
}

fn translate(manifest: &Path, config: &str, out: &Path, extra: &[&str]) -> Output {
    let config = manifest.parent().unwrap().join(config);
    let mut args = vec!["translate", "--suite", s(manifest), "--config", s(&config), "--out", s(out)];
    args.extend_from_slice(extra);
    dualrun(&args)
}

fn records(path: &Path) -> Vec<RunRecord> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn translate_report_and_compare_over_two_programs() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = suite(dir.path(), &["NC101", "SQ101"]);
    let out = dir.path().join("out");
    let r =
        translate(&manifest, "config-scripted.json", &out, &["--repeats", "3", "--seed-base", "40", "--parallel", "2"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));

    let det = records(&out.join("runs-deterministic.jsonl"));
    let agt = records(&out.join("runs-agentic.jsonl"));
    assert_eq!(det.len() + agt.len(), 12);
    let keys: Vec<(String, u32)> = det.iter().map(|r| (r.program_id.clone(), r.run_index)).collect();
    let mut sorted = keys.clone();
    sorted.sort();
    assert_eq!(keys, sorted);
    for (d, a) in det.iter().zip(&agt) {
        assert_eq!(d.config.seed, 40 + u64::from(d.run_index));
        // The two modes see the same config apart from the mode field.
        assert_eq!(d.config.with_mode(Mode::Agentic), a.config);
        assert_ne!(d.config.fingerprint(), a.config.fingerprint());
    }
    assert!(out.join("transcripts/agentic/SQ101-2.jsonl").is_file());
    assert!(!out.join("work").exists());

    let report = dir.path().join("report");
    let runlogs = [out.join("runs-deterministic.jsonl"), out.join("runs-agentic.jsonl")];
    let prices = manifest.parent().unwrap().join("prices.json");
    let r = dualrun(&[
        "report",
        s(&runlogs[0]),
        s(&runlogs[1]),
        "--prices",
        s(&prices),
        "--suite",
        s(&manifest),
        "--out",
        s(&report),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(report.join("metrics.csv")).unwrap();
    for id in ["NC101", "SQ101"] {
        let rows: Vec<&str> = csv.lines().filter(|l| l.starts_with(&format!("PROGRAM,{id},"))).collect();
        assert_eq!(rows.len(), 2, "{csv}");
        assert!(rows.iter().all(|r| r.split(',').nth(3) == Some("3")));
    }
    assert!(report.join("harness-deterministic.csv").is_file());
    assert!(report.join("harness-agentic.json").is_file());

    let r = dualrun(&["compare-traces", s(&runlogs[0])]);
    assert!(r.status.success());
    let groups: Vec<Value> = serde_json::from_slice(&r.stdout).unwrap();
    assert_eq!(groups.len(), 2);
    assert!(groups.iter().all(|g| g["distinct_hashes"] == 1 && g["status"] == "ok"));
}

#[test]
fn missing_config_is_a_usage_error_with_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = suite(dir.path(), &["NC101"]);
    let out = dir.path().join("out");
    let r = translate(&manifest, "no-such-config.json", &out, &[]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn invalid_arguments_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = suite(dir.path(), &["NC101"]);
    let out = dir.path().join("out");
    assert_eq!(translate(&manifest, "config-scripted.json", &out, &["--repeats", "0"]).status.code(), Some(2));
    assert_eq!(translate(&manifest, "config-scripted.json", &out, &["--mode", "sideways"]).status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn empty_runlog_gives_header_only_report() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("runs.jsonl");
    fs::write(&empty, "").unwrap();
    let report = dir.path().join("report");
    let r = dualrun(&["report", s(&empty), "--out", s(&report)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let csv = fs::read_to_string(report.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1);
    assert!(csv.starts_with("SCOPE,KEY,MODE,N,CA,BEST_CA,SR,P5_CA,CVAR_0_1,"));
}

#[test]
fn single_run_groups_report_insufficient_repeats() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = suite(dir.path(), &["NC102"]);
    let out = dir.path().join("out");
    assert!(translate(&manifest, "config-scripted.json", &out, &["--mode", "deterministic"]).status.success());
    let cmp = dir.path().join("cmp.json");
    let r = dualrun(&["compare-traces", s(&out.join("runs-deterministic.jsonl")), "--out", s(&cmp)]);
    assert!(r.status.success());
    let groups: Vec<Value> = serde_json::from_str(&fs::read_to_string(cmp).unwrap()).unwrap();
    assert_eq!(groups[0]["status"], "insufficient repeats");
    assert_eq!(groups[0]["runs"], 1);
}

#[test]
fn mixed_schema_versions_are_rejected_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = suite(dir.path(), &["NC101"]);
    let out = dir.path().join("out");
    assert!(translate(&manifest, "config-scripted.json", &out, &["--mode", "deterministic", "--repeats", "2"])
        .status
        .success());
    let log = out.join("runs-deterministic.jsonl");
    let text = fs::read_to_string(&log).unwrap();
    let second = text.lines().nth(1).unwrap().replacen("\"schema_version\":\"v1\"", "\"schema_version\":\"v0\"", 1);
    let mixed = dir.path().join("mixed.jsonl");
    fs::write(&mixed, format!("{}\n{second}\n", text.lines().next().unwrap())).unwrap();
    let report = dir.path().join("report");
    let r = dualrun(&["report", s(&mixed), "--out", s(&report)]);
    assert_eq!(r.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&r.stderr);
    assert!(stderr.contains(&format!("{}:2: v0", mixed.display())), "{stderr}");
    assert!(!stderr.contains("mixed.jsonl:1"));
    assert!(!report.exists());
}

#[test]
fn equal_seeds_reproduce_runlogs_apart_from_wall_time() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = suite(dir.path(), &["NC103", "IF101"]);
    let run = |name: &str| {
        let out = dir.path().join(name);
        let r = translate(&manifest, "config-stub.json", &out, &["--repeats", "2", "--seed-base", "9"]);
        assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
        let mut all = records(&out.join("runs-deterministic.jsonl"));
        all.extend(records(&out.join("runs-agentic.jsonl")));
        for r in &mut all {
            r.wall_time_ms = 0;
        }
        all
    };
    assert_eq!(run("a"), run("b"));
}
