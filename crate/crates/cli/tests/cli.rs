use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use unlearn_cli::store::Layout;

fn unlearn(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_unlearn"))
        .arg("--dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = unlearn(dir, args);
    assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn fresh(capacity: usize) -> tempfile::TempDir {
    let t = tempfile::tempdir().unwrap();
    let cfg = t.path().join("cfg.txt");
    fs::write(&cfg, format!("arity = 1\ncapacity = {capacity}\n")).unwrap();
    let dir = t.path().join("state");
    ok(&dir, &["setup", "--config", cfg.to_str().unwrap()]);
    ok(&dir, &["init"]);
    t
}

fn state(t: &tempfile::TempDir) -> std::path::PathBuf {
    t.path().join("state")
}

fn add_points(dir: &Path, uids: &[u64]) {
    for u in uids {
        let x = format!("0.{u}");
        let y = (u % 2).to_string();
        ok(dir, &["add", "--uid", &u.to_string(), "--features", &x, "--label", &y]);
    }
}

#[test]
fn add_update_verify() {
    let t = fresh(4);
    let dir = state(&t);
    ok(&dir, &["verify-update", "--iteration", "0"]);
    add_points(&dir, &[1, 2, 3, 4]);
    ok(&dir, &["update"]);
    ok(&dir, &["verify-update", "--iteration", "1"]);
}

#[test]
fn delete_update_prove_verify_unlearn() {
    let t = fresh(4);
    let dir = state(&t);
    add_points(&dir, &[1, 2, 3]);
    ok(&dir, &["update"]);
    ok(&dir, &["delete", "--uid", "2"]);
    ok(&dir, &["update"]);
    ok(&dir, &["verify-update", "--iteration", "2"]);
    let out = ok(&dir, &["--json", "prove-unlearn", "--uid", "2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["iteration"], 2);
    ok(&dir, &["verify-unlearn", "--uid", "2", "--iteration", "2"]);
}

#[test]
fn tampered_unlearn_proof_is_rejected() {
    let t = fresh(4);
    let dir = state(&t);
    add_points(&dir, &[1, 2]);
    ok(&dir, &["update"]);
    ok(&dir, &["delete", "--uid", "1"]);
    ok(&dir, &["update"]);
    ok(&dir, &["prove-unlearn", "--uid", "1"]);
    let p = Layout::new(&dir).unlearn_proof(2, 1);
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&p).unwrap()).unwrap();
    let node = v["path"][0].as_str().unwrap().to_string();
    let flipped = if node.ends_with('0') { "1" } else { "0" };
    v["path"][0] = serde_json::Value::String(format!("{}{flipped}", &node[..node.len() - 1]));
    fs::write(&p, v.to_string()).unwrap();
    let o = unlearn(&dir, &["verify-unlearn", "--uid", "1", "--iteration", "2"]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stderr).contains("path mismatch"));
}

#[test]
fn tampered_update_proof_is_rejected() {
    let t = fresh(4);
    let dir = state(&t);
    add_points(&dir, &[1, 2]);
    ok(&dir, &["update"]);
    let p = Layout::new(&dir).update_proof(1);
    let text = fs::read_to_string(&p).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let b = v["pi_d"]["proof_bytes"].as_str().unwrap().to_string();
    let flipped = if b.starts_with('A') { "B" } else { "A" };
    v["pi_d"]["proof_bytes"] = serde_json::Value::String(format!("{flipped}{}", &b[1..]));
    fs::write(&p, v.to_string()).unwrap();
    assert_eq!(code(&unlearn(&dir, &["verify-update", "--iteration", "1"])), 1);
}

#[test]
fn usage_errors_exit_2() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(code(&unlearn(t.path(), &["update"])), 2);
    assert_eq!(code(&unlearn(t.path(), &["frobnicate"])), 2);
    let t = fresh(4);
    let dir = state(&t);
    assert_eq!(code(&unlearn(&dir, &["init"])), 2);
    add_points(&dir, &[1]);
    assert_eq!(code(&unlearn(&dir, &["add", "--uid", "1", "--features", "0.5", "--label", "0"])), 2);
    assert_eq!(code(&unlearn(&dir, &["delete", "--uid", "9"])), 2);
    ok(&dir, &["delete", "--uid", "1"]);
    ok(&dir, &["update"]);
    let o = unlearn(&dir, &["add", "--uid", "1", "--features", "0.1", "--label", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("can never be added again"));
    assert_eq!(code(&unlearn(&dir, &["prove-unlearn", "--uid", "5"])), 2);
}

#[test]
fn capacity_overflow_is_a_usage_error_and_keeps_state() {
    let t = fresh(2);
    let dir = state(&t);
    add_points(&dir, &[1, 2, 3]);
    let before = fs::read(Layout::new(&dir).state()).unwrap();
    assert_eq!(code(&unlearn(&dir, &["update"])), 2);
    assert_eq!(fs::read(Layout::new(&dir).state()).unwrap(), before);
}

#[test]
fn corrupted_state_exits_3() {
    let t = fresh(4);
    let dir = state(&t);
    let l = Layout::new(&dir);
    fs::write(l.state(), "{ not json").unwrap();
    assert_eq!(code(&unlearn(&dir, &["update"])), 3);

    let t = fresh(4);
    let dir = state(&t);
    let l = Layout::new(&dir);
    add_points(&dir, &[1, 2]);
    ok(&dir, &["update"]);
    // a state whose digests no longer match its dataset
    let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(l.state()).unwrap()).unwrap();
    v["state"]["dataset"]["points"][0]["uid"] = 77.into();
    fs::write(l.state(), v.to_string()).unwrap();
    let o = unlearn(&dir, &["update"]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn replay_is_byte_identical() {
    let run = || {
        let t = fresh(4);
        let dir = state(&t);
        add_points(&dir, &[1, 2, 3]);
        ok(&dir, &["update"]);
        ok(&dir, &["delete", "--uid", "3"]);
        add_points(&dir, &[4]);
        ok(&dir, &["update"]);
        ok(&dir, &["prove-unlearn", "--uid", "3"]);
        let l = Layout::new(&dir);
        let files = [
            l.commitment(0),
            l.commitment(1),
            l.commitment(2),
            l.update_proof(1),
            l.update_proof(2),
            l.unlearn_proof(2, 3),
        ];
        let bytes: Vec<Vec<u8>> = files.iter().map(|p| fs::read(p).unwrap()).collect();
        (t, bytes)
    };
    let (_a, x) = run();
    let (_b, y) = run();
    assert_eq!(x, y);
}

fn crash_then_recover(fault: &str) {
    let t = fresh(4);
    let dir = state(&t);
    let l = Layout::new(&dir);
    add_points(&dir, &[1, 2]);
    let before = fs::read(l.state()).unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_unlearn"))
        .env(unlearn_cli::store::FAULT_ENV, fault)
        .arg("--dir")
        .arg(&dir)
        .arg("update")
        .output()
        .unwrap();
    assert!(!o.status.success(), "{fault}: injected abort did not fire");
    assert_eq!(fs::read(l.state()).unwrap(), before, "{fault}");
    ok(&dir, &["update"]);
    ok(&dir, &["verify-update", "--iteration", "1"]);
}

#[test]
fn killed_update_leaves_previous_state() {
    // writes during update: com_i, update_i, state
    for fault in [
        "abort-before-rename:1",
        "abort-after-write:1",
        "abort-after-write:2",
        "abort-before-rename:3",
    ] {
        crash_then_recover(fault);
    }
}

#[test]
fn lock_blocks_a_second_writer() {
    let t = fresh(4);
    let dir = state(&t);
    let guard = Layout::new(&dir).lock().unwrap();
    let o = unlearn(&dir, &["add", "--uid", "1", "--features", "0.5", "--label", "1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("locked"));
    // readers do not take the lock
    ok(&dir, &["verify-update", "--iteration", "0"]);
    drop(guard);
    add_points(&dir, &[1]);
}

#[test]
fn csv_add_applies_split() {
    let t = tempfile::tempdir().unwrap();
    let csv = t.path().join("d.csv");
    let rows: Vec<String> = (0..10).map(|i| format!("0.{i},{}", i % 2)).collect();
    fs::write(&csv, format!("x,target\n{}\n", rows.join("\n"))).unwrap();
    let dir = t.path().join("s");
    ok(&dir, &["setup", "--dataset", csv.to_str().unwrap()]);
    assert!(fs::read_to_string(Layout::new(&dir).config_text()).unwrap().contains("arity = 1"));
    ok(&dir, &["init"]);
    let out = ok(&dir, &["--json", "add", "--dataset", csv.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["queued"].as_array().unwrap().len(), 8);
    assert_eq!(v["held_out"], 2);
}

#[test]
fn game_command_reports() {
    let t = fresh(4);
    let dir = state(&t);
    let out = ok(&dir, &["--json", "game", "--seeds", "2"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["reports"].as_array().unwrap().len(), 10);
    assert_eq!(v["wins"], 0);
    for r in v["reports"].as_array().unwrap() {
        assert!(r.get("strategy").is_some() && r.get("seed").is_some() && r.get("failing_check").is_some());
    }
    let o = unlearn(&dir, &["game", "--strategy", "CheatWithUnsoundBackend", "--no-commitment-check"]);
    assert_eq!(code(&o), 1);
    let o = unlearn(&dir, &["game", "--strategy", "ReAddAfterUnlearn", "--backend", "unsound"]);
    assert_eq!(code(&o), 1);
    assert_eq!(code(&unlearn(&dir, &["game", "--strategy", "Nobody"])), 2);
}

#[test]
fn bench_counts_scale_linearly() {
    let t = tempfile::tempdir().unwrap();
    let out = ok(t.path(), &["--json", "bench", "--sizes", "4,8,16"]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    let counts: Vec<f64> = v["rows"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| r["model_constraints"].as_f64().unwrap())
        .collect();
    for w in counts.windows(2) {
        let ratio = w[1] / w[0];
        assert!((1.8..=2.2).contains(&ratio), "{counts:?}");
    }
}
