use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn firesched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_firesched"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = firesched(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn smoke() -> PathBuf {
    repo().join("scenarios/smoke.json")
}

#[test]
fn mission_run_then_report() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m");
    let stdout = ok(&["mission", "run", "--config", s(&smoke()), "--out", s(&m)]);
    assert!(stdout.starts_with("schedule,block,z,"));
    assert_eq!(stdout.lines().count(), 1 + 2 + 1);
    for name in [
        "report.json",
        "schedule_results.csv",
        "detection_status.csv",
        "summary.csv",
        "gantt.csv",
        "ground_track.csv",
        "resources.csv",
        "registry.json",
    ] {
        assert!(m.join(name).exists(), "{name}");
    }
    let before = fs::read(m.join("schedule_results.csv")).unwrap();
    fs::remove_file(m.join("gantt.csv")).unwrap();
    let stdout = ok(&["report", "--mission", s(&m)]);
    assert!(stdout.contains("cumulative_fires"));
    assert!(m.join("gantt.csv").exists());
    assert_eq!(fs::read(m.join("schedule_results.csv")).unwrap(), before);
}

#[test]
fn eossp_run_reports_no_budget() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&[
        "mission",
        "run",
        "--config",
        s(&smoke()),
        "--out",
        s(dir.path()),
        "--scheduler",
        "eossp",
        "--sequential",
    ]);
    let row = stdout.lines().nth(1).unwrap();
    assert!(row.starts_with("EOSSP,1,"), "{row}");
    assert!(row.ends_with(",,"), "{row}");
}

#[test]
fn visibility_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let inst = dir.path().join("inst.json");
    ok(&[
        "visibility",
        "compute",
        "--config",
        s(&smoke()),
        "--out",
        s(&inst),
    ]);
    assert!(dir.path().join("inst.fsvt").exists());
    let sched = dir.path().join("s.json");
    ok(&[
        "schedule",
        "solve",
        "--instance",
        s(&inst),
        "--out",
        s(&sched),
    ]);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&sched).unwrap()).unwrap();
    assert_eq!(v["format"], "firesched-schedule/1");
    assert_eq!(v["violations"].as_array().unwrap().len(), 0);
    assert!(v["summary"]["z"].as_f64().unwrap() >= 0.0);
    let seq = ok(&["schedule", "solve", "--instance", s(&inst), "--sequential"]);
    let w: serde_json::Value = serde_json::from_str(&seq).unwrap();
    assert_eq!(w["summary"]["z"], v["summary"]["z"]);
}

#[test]
fn detect_and_fuse_emitted_rasters() {
    let dir = tempfile::tempdir().unwrap();
    ok(&[
        "mission",
        "run",
        "--config",
        s(&smoke()),
        "--out",
        s(dir.path()),
    ]);
    let pgm = fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().path())
        .find(|p| p.extension().is_some_and(|x| x == "pgm"))
        .unwrap();
    let dets: serde_json::Value =
        serde_json::from_str(&ok(&["detect", "--raster", s(&pgm)])).unwrap();
    for d in dets.as_array().unwrap() {
        assert!(d["lat"].as_f64().unwrap().abs() <= 90.0);
        assert!(d["box"]["confidence"].as_f64().unwrap() > 0.0);
    }
    let fused = dir.path().join("fused.pgm");
    let weights = ok(&[
        "fuse",
        "early",
        "--raster",
        s(&pgm),
        "--raster",
        s(&pgm),
        "--out",
        s(&fused),
    ]);
    let w: Vec<f64> = serde_json::from_str(&weights).unwrap();
    assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    assert!(fused.exists());
}

#[test]
fn fuse_late_merges_overlapping_boxes() {
    let dir = tempfile::tempdir().unwrap();
    let boxes = dir.path().join("boxes.json");
    fs::write(
        &boxes,
        r#"[{"x":10,"y":10,"w":4,"h":4,"confidence":0.8,"source_model":1},
            {"x":10.5,"y":10,"w":4,"h":4,"confidence":0.6,"source_model":2},
            {"x":50,"y":50,"w":4,"h":4,"confidence":0.7,"source_model":1}]"#,
    )
    .unwrap();
    let out: serde_json::Value = serde_json::from_str(&ok(&[
        "fuse",
        "late",
        "--boxes",
        s(&boxes),
        "--models",
        "2",
    ]))
    .unwrap();
    assert_eq!(out.as_array().unwrap().len(), 2);
}

#[test]
fn bad_inputs_fail_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = firesched(&["schedule", "solve", "--instance", "does-not-exist.json"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("does-not-exist.json"));

    let bad = dir.path().join("bad.json");
    fs::write(
        &bad,
        r#"{"format": "firesched-bundle/1", "mission": {"n_blocks": 1}}"#,
    )
    .unwrap();
    let out = firesched(&["mission", "run", "--config", s(&bad)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("start"));

    let out = firesched(&["fuse", "late", "--boxes", s(&bad), "--models", "0"]);
    assert!(!out.status.success());
}
