use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use teleop_core::mapping::WorkspaceCalibration;
use teleop_core::retargeting::synthetic_hand;
use teleop_core::simulator::{verify, Recording};

const GOLDEN: &str = include_str!("golden/run_medium_medium_optimal_seed7.txt");

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn teleop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_teleop")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn only_file(dir: &Path) -> PathBuf {
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1, "{files:?}");
    files.pop().unwrap()
}

#[test]
fn run_matches_golden_metrics_line_and_verifies() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let o = teleop(&["run", "--config", "medium_medium", "--operator", "optimal", "--seed", "7", "--out", out]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o), GOLDEN);

    let rec_path = only_file(dir.path());
    let rec = Recording::load(&rec_path).unwrap();
    assert!(verify(&rec).ok());
    assert_eq!(rec.trailer.metrics.success_rate, 1.0);

    let v = teleop(&["verify", "--recording", rec_path.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(0));

    let same_file = configs().join("variants/medium_medium.toml");
    let dir2 = tempfile::tempdir().unwrap();
    let o2 = teleop(&["run", "--config", same_file.to_str().unwrap(), "--operator", "optimal", "--seed", "7", "--out", dir2.path().to_str().unwrap()]);
    assert_eq!(stdout(&o2), GOLDEN);
    assert_eq!(std::fs::read(&rec_path).unwrap(), std::fs::read(only_file(dir2.path())).unwrap());
}

#[test]
fn verify_flags_tampered_recordings() {
    let dir = tempfile::tempdir().unwrap();
    let o = teleop(&["run", "--config", "large_large", "--operator", "noisy", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let path = only_file(dir.path());
    let text = std::fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let last = lines.pop().unwrap();
    let mut trailer: serde_json::Value = serde_json::from_str(&last).unwrap();
    trailer["metrics"]["completed"] = serde_json::json!(trailer["metrics"]["completed"].as_u64().unwrap() + 1);
    lines.push(trailer.to_string());
    let bad = dir.path().join("tampered.jsonl");
    std::fs::write(&bad, lines.join("\n") + "\n").unwrap();
    let v = teleop(&["verify", "--recording", bad.to_str().unwrap()]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn batch_writes_forty_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv_path = dir.path().join("table.csv");
    let o = teleop(&[
        "batch",
        "--configs",
        configs().join("variants").to_str().unwrap(),
        "--operators",
        "optimal,noisy",
        "--seeds",
        "1..5",
        "--out",
        csv_path.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(&csv_path).unwrap();
    let headers = r.headers().unwrap().clone();
    for col in ["config", "operator", "seed", "config_hash", "avg_reach_time", "avg_reach_velocity", "avg_ee_velocity", "effective_ratio", "success_rate"] {
        assert!(headers.iter().any(|h| h == col), "missing column {col}");
    }
    let rows: Vec<csv::StringRecord> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 40);
    let configs: std::collections::BTreeSet<&str> = rows.iter().map(|r| &r[0]).collect();
    assert_eq!(configs.len(), 4);
}

#[test]
fn exit_codes_distinguish_failure_classes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let config = teleop(&["run", "--config", "gigantic", "--operator", "optimal", "--out", out]);
    assert_eq!(config.status.code(), Some(3));
    let bad_op = teleop(&["run", "--config", "small_small", "--operator", "psychic", "--out", out]);
    assert_eq!(bad_op.status.code(), Some(3));
    let io = teleop(&["verify", "--recording", "/nonexistent/rec.jsonl"]);
    assert_eq!(io.status.code(), Some(4));

    let garbage = dir.path().join("garbage.jsonl");
    std::fs::write(&garbage, "{\"kind\":\"nonsense\"}\n").unwrap();
    let contract = teleop(&["verify", "--recording", garbage.to_str().unwrap()]);
    assert_eq!(contract.status.code(), Some(5));

    let keypoints = dir.path().join("k.jsonl");
    let mut frame = serde_json::to_value(synthetic_hand(0.0, [0.3; 5])).unwrap();
    frame["keypoints"][0] = serde_json::json!([0.1, 0.0, 0.0]);
    std::fs::write(&keypoints, frame.to_string() + "\n").unwrap();
    let hand = configs().join("hands/five_finger.toml");
    let r = teleop(&[
        "retarget",
        "--hand-model",
        hand.to_str().unwrap(),
        "--keypoints",
        keypoints.to_str().unwrap(),
        "--out",
        dir.path().join("q.jsonl").to_str().unwrap(),
    ]);
    assert_eq!(r.status.code(), Some(5));
}

#[test]
fn calibrate_from_a_recorded_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let o = teleop(&["run", "--config", "medium_medium", "--operator", "noisy", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let rec = only_file(dir.path());
    let calib = dir.path().join("calib.toml");
    let input = format!("replay:{}", rec.display());
    let c = teleop(&["calibrate", "--input", &input, "--out", calib.to_str().unwrap(), "--arm", "1"]);
    assert!(c.status.success(), "{}", String::from_utf8_lossy(&c.stderr));
    let loaded = WorkspaceCalibration::load(&calib).unwrap();
    assert!(loaded.human_radius > 0.0);
    let replay = teleop(&["run", "--config", "medium_medium", "--operator", &input, "--out", dir.path().join("again").to_str().unwrap()]);
    assert!(replay.status.success());
    let bad_arm = teleop(&["calibrate", "--input", &input, "--out", calib.to_str().unwrap(), "--arm", "5"]);
    assert_eq!(bad_arm.status.code(), Some(5));
}

#[test]
fn retarget_writes_one_line_per_frame() {
    let dir = tempfile::tempdir().unwrap();
    let keypoints = dir.path().join("k.jsonl");
    let mut f = std::fs::File::create(&keypoints).unwrap();
    for i in 0..50 {
        let t = i as f64 / 30.0;
        let c = 0.5 + 0.4 * t.sin();
        writeln!(f, "{}", serde_json::to_string(&synthetic_hand(t, [c; 5])).unwrap()).unwrap();
    }
    drop(f);
    let out = dir.path().join("q.jsonl");
    let hand = configs().join("hands/five_finger.toml");
    let o = teleop(&[
        "retarget",
        "--hand-model",
        hand.to_str().unwrap(),
        "--keypoints",
        keypoints.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--beta",
        "0.1",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 50);
    assert_eq!(lines[0]["q"].as_array().unwrap().len(), 10);
}

#[test]
fn serve_announces_its_address() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_teleop"))
        .args(["serve", "--config", "medium_medium", "--listen", "127.0.0.1:0", "--out", dir.path().to_str().unwrap()])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(line.starts_with("listening on ws://127.0.0.1:"), "{line}");
}
