use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

fn mmal(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmal")).args(args).output().unwrap()
}

fn generate(dir: &Path, cars: &str) {
    let out = mmal(&["generate", "--out", dir.to_str().unwrap(), "--cars", cars, "--occupancy", "30"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn generate_replay_sweep_compare() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    generate(&s, "240");
    for f in ["orders.json", "constraints.json", "colors.json", "config.json", "events.jsonl", "legacy_events.jsonl"] {
        assert!(s.join(f).exists(), "{f}");
    }
    let sd = s.to_str().unwrap();

    let r = tmp.path().join("r");
    let out = mmal(&["replay", "--scenario", sd, "--events", &format!("{sd}/events.jsonl"), "--out", r.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stdout).contains("240 cars left the buffer"));
    let log = std::fs::read_to_string(r.join("decisions.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 480);
    assert!(r.join("report.json").exists() && r.join("report.csv").exists());

    let sw = tmp.path().join("sw");
    let out = mmal(&["sweep", "--scenario", sd, "--k", "0..5", "--seed", "42", "--out", sw.to_str().unwrap(), "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..=5 {
        assert!(sw.join(format!("k{k}.json")).exists());
    }
    assert!(sw.join("report.json").exists() && !sw.join("report.csv").exists());

    let c = tmp.path().join("c");
    let out = mmal(&[
        "compare",
        "--scenario",
        sd,
        "--old",
        &format!("{sd}/legacy_events.jsonl"),
        "--new",
        &format!("{sd}/events.jsonl"),
        "--out",
        c.to_str().unwrap(),
        "--strategy",
        "last_k_equal:3",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(c.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["old"]["label"], "P_old");
    assert!(report["aabs_gain"].as_f64().unwrap() > 0.0);
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    generate(&s, "20");
    let sd = s.to_str().unwrap();
    assert_eq!(mmal(&["validate", "--scenario", sd]).status.code(), Some(0));

    // duplicate blend number
    let orders = std::fs::read_to_string(s.join("orders.json")).unwrap();
    std::fs::write(s.join("orders.json"), orders.replace("\"blend_number\": 2,", "\"blend_number\": 1,")).unwrap();
    let out = mmal(&["validate", "--scenario", sd]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("blend number 1 shared by orders V000001, V000002"));

    std::fs::write(s.join("orders.json"), "[{").unwrap();
    assert_eq!(mmal(&["validate", "--scenario", sd]).status.code(), Some(1));

    let missing = tmp.path().join("missing");
    assert_eq!(mmal(&["validate", "--scenario", missing.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(mmal(&["validate", "--scenario", sd, "--bogus"]).status.code(), Some(64));
    assert_eq!(mmal(&["sweep", "--scenario", sd, "--k", "5..1", "--out", "x"]).status.code(), Some(64));
}

#[test]
fn bad_strategy_is_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    generate(&s, "20");
    let sd = s.to_str().unwrap();
    let out = mmal(&["replay", "--scenario", sd, "--events", &format!("{sd}/events.jsonl"), "--out", sd, "--strategy", "fanciest"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn serve_honors_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let s = tmp.path().join("s");
    generate(&s, "20");
    let mut child = Command::new(env!("CARGO_BIN_EXE_mmal"))
        .arg("serve")
        .env("SCENARIO_DIR", &s)
        .env("PORT", "0")
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let base = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let status = loop {
        let r = reqwest::blocking::get(format!("{base}/status")).unwrap();
        if r.status() != reqwest::StatusCode::SERVICE_UNAVAILABLE {
            break r;
        }
        std::thread::sleep(std::time::Duration::from_millis(10));
    };
    let body: serde_json::Value = status.json().unwrap();
    assert_eq!(body["pool_size"], 20);
    child.kill().unwrap();
    child.wait().unwrap();
}
