use std::path::Path;
use std::process::{Command, Output};

fn mosaic(args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_mosaic"))
        .args(args)
        .output()
        .expect("spawn mosaic");
    assert!(
        out.status.success(),
        "mosaic {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).expect("read json")).expect("parse json")
}

#[test]
fn generate_run_and_rescore() {
    let root = tempfile::tempdir().expect("temp dir");
    let data = root.path().join("data");
    let out_dir = root.path().join("out");
    let d = data.to_str().expect("utf-8 path");
    mosaic(&["gen-synth", "--out", d, "--stream-id", "cam", "--frames", "300", "--width", "320", "--height", "240"]);
    let stream = data.join("cam");
    assert!(stream.join("annotations.txt").is_file());

    let s = stream.to_str().expect("utf-8 path");
    let o = out_dir.to_str().expect("utf-8 path");
    let run = mosaic(&[
        "run", "--streams", s, "--extraction", "gt", "--policy", "elastic:2", "--out-dir", o, "--set", "min_frames=0",
    ]);
    assert!(String::from_utf8_lossy(&run.stdout).contains("recall"));
    let report = json(&out_dir.join("report.json"));
    assert_eq!(report["map"], 1.0);

    let scored = root.path().join("eval.json");
    let detections = out_dir.join("detections.csv");
    mosaic(&[
        "eval",
        "--detections",
        detections.to_str().expect("utf-8 path"),
        "--streams",
        s,
        "--json",
        scored.to_str().expect("utf-8 path"),
    ]);
    let rescored = json(&scored);
    for key in ["map", "precision", "recall", "tp", "fp", "fn"] {
        assert_eq!(rescored[key], report[key], "{key}");
    }
}

#[test]
fn curate_drops_static_objects() {
    let root = tempfile::tempdir().expect("temp dir");
    let input = root.path().join("annotations.txt");
    let mut text = String::new();
    for k in 0..30 {
        // Object 1 never moves; object 2 moves every frame.
        text.push_str(&format!("1 30 {} 10 10 20 20 1\n", k * 10));
        text.push_str(&format!("2 30 {} {} 50 20 20 2\n", k * 10, 10 + k * 3));
    }
    std::fs::write(&input, text).expect("write annotations");
    let output = root.path().join("kept.txt");
    mosaic(&["curate", input.to_str().expect("utf-8"), "--output", output.to_str().expect("utf-8")]);
    let kept = std::fs::read_to_string(&output).expect("read output");
    assert_eq!(kept.lines().count(), 30);
    assert!(kept.lines().all(|l| l.starts_with("2 ")));
}

#[test]
fn bench_compose_writes_points() {
    let root = tempfile::tempdir().expect("temp dir");
    let csv = root.path().join("points.csv");
    mosaic(&["bench-compose", "--counts", "1,4", "--repeats", "2", "--out", csv.to_str().expect("utf-8")]);
    let text = std::fs::read_to_string(&csv).expect("read csv");
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn unknown_policy_is_reported() {
    let out = Command::new(env!("CARGO_BIN_EXE_mosaic"))
        .args(["run", "--streams", "nowhere", "--policy", "sideways:3"])
        .output()
        .expect("spawn mosaic");
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("policy"));
}
