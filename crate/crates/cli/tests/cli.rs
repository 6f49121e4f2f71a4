use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn grasp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_grasp")).current_dir(root()).args(args).output().unwrap()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("grasp-cli-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_object_is_a_usage_error() {
    let out = grasp(&["synth", "--hand", "assets/hands/gripper2.json", "--object", "assets/objects/nope.obj"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("asset not found"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    assert_eq!(grasp(&["synth", "--frobnicate"]).status.code(), Some(2));
}

#[test]
fn dry_run_writes_nothing() {
    let dir = scratch("dry");
    let target = dir.join("ds.jsonl");
    let out = grasp(&[
        "synth", "--hand", "assets/hands/gripper2.json", "--object", "assets/objects/box.obj", "--dry-run", "--out",
        s(&target),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!target.exists());
}

#[test]
fn empty_dataset_gives_empty_results() {
    let dir = scratch("empty");
    let dataset = dir.join("empty.jsonl");
    std::fs::write(&dataset, "").unwrap();
    let results = dir.join("tr.jsonl");
    let out = grasp(&[
        "transfer", "--dataset", s(&dataset), "--target-hand", "assets/hands/barrett3.json", "--object",
        "assets/objects/sphere.obj", "--out", s(&results),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    let text = std::fs::read_to_string(&results).unwrap();
    assert_eq!(text.lines().count(), 1, "header only");
}

#[test]
fn pipeline_composes_and_counts() {
    let dir = scratch("pipeline");
    let (ds, tr, ev) = (dir.join("ds.jsonl"), dir.join("tr.jsonl"), dir.join("ev.jsonl"));
    let out = grasp(&[
        "synth", "--hand", "assets/hands/gripper2.json", "--object", "assets/objects/sphere.obj", "--seed", "5",
        "--batch", "8", "--steps", "400", "--out", s(&ds),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let records = std::fs::read_to_string(&ds).unwrap().lines().count() - 1;
    assert!(records >= 1);

    // a garbage line is skipped and counted, not fatal
    let mut text = std::fs::read_to_string(&ds).unwrap();
    text.push_str("not json\n");
    std::fs::write(&ds, text).unwrap();

    let out = grasp(&[
        "transfer", "--dataset", s(&ds), "--target-hand", "assets/hands/barrett3.json", "--restarts", "2", "--steps",
        "60", "--out", s(&tr),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipped 1"));
    assert_eq!(std::fs::read_to_string(&tr).unwrap().lines().count() - 1, records);

    let out = grasp(&["eval", "--results", s(&tr), "--out", s(&ev)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&ev).unwrap().lines().count() - 1, records);
    let csv = std::fs::read_to_string(ev.with_extension("csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("hand,object,success_rate,diversity_rad,mean_seconds"));
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(&row[..2], &["barrett3", "sphere"]);
    let rate: f64 = row[2].parse().unwrap();
    assert!((0.0..=1.0).contains(&rate));

    // records for an object that is not loaded are rejected
    let out = grasp(&[
        "transfer", "--dataset", s(&ds), "--target-hand", "assets/hands/barrett3.json", "--object",
        "assets/objects/box.obj", "--out", s(&dir.join("bad.jsonl")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_sets_parameters() {
    let dir = scratch("config");
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        "hand = \"assets/hands/gripper2.json\"\nobjects = [\"assets/objects/box.obj\"]\nsample_count = 256\n\
         [synth]\nbatch = 2\nsteps = 50\n",
    )
    .unwrap();
    let ds = dir.join("ds.jsonl");
    let out = grasp(&["synth", "--config", s(&cfg), "--seed", "3", "--jobs", "2", "--out", s(&ds)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let header: serde_json::Value =
        serde_json::from_str(std::fs::read_to_string(&ds).unwrap().lines().next().unwrap()).unwrap();
    assert_eq!(header["kind"], "header");
    assert_eq!(header["seed"], 3);
    assert_eq!(header["config"]["synth"]["batch"], 2);
    assert_eq!(header["config"]["sample_count"], 256);

    let bad = dir.join("bad.toml");
    std::fs::write(&bad, "no_such_field = 1\n").unwrap();
    assert_eq!(grasp(&["synth", "--config", s(&bad)]).status.code(), Some(2));
}
