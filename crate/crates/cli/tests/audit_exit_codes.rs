use std::path::Path;
use std::process::{Command, Output};

use serde_json::{json, Value};

fn hpkb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hpkb")).args(args).env_remove("HPKB_AGENT_ENDPOINT").output().unwrap()
}

fn arg(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes the two-drug fixture and builds a sealed store from it.
fn fixture(dir: &Path) -> (std::path::PathBuf, Value) {
    let corpus = dir.join("corpus");
    let store = dir.join("store");
    assert!(hpkb(&["gen-corpus", "--case-study", "--out", arg(&corpus)]).status.success());
    let out = hpkb(&["build", "--corpus", arg(&corpus), "--store", arg(&store)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rx = std::fs::read_to_string(corpus.join("prescription.json")).unwrap();
    (store, serde_json::from_str(&rx).unwrap())
}

fn audit(dir: &Path, store: &Path, rx: &Value) -> (i32, Value) {
    let path = dir.join("rx.json");
    std::fs::write(&path, rx.to_string()).unwrap();
    let out = hpkb(&["audit", "--store", arg(store), arg(&path)]);
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out.status.code().unwrap(), report)
}

#[test]
fn case_study_exits_two_with_interaction_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (store, rx) = fixture(dir.path());
    let (code, report) = audit(dir.path(), &store, &rx);
    assert_eq!(code, 2);
    let findings = report["findings"].as_array().unwrap();
    assert!(findings.iter().any(|f| f["category"] == "Interaction" && f["verdict"] == "Violation"));
}

#[test]
fn clean_prescription_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let (store, mut rx) = fixture(dir.path());
    rx["drug_list"].as_array_mut().unwrap().truncate(1);
    rx["id"] = json!("clean");
    let (code, report) = audit(dir.path(), &store, &rx);
    assert_eq!(code, 0, "{report:#}");
}

#[test]
fn unknown_crcl_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let (store, mut rx) = fixture(dir.path());
    rx["drug_list"].as_array_mut().unwrap().truncate(1);
    rx["patient"]["crcl"] = Value::Null;
    let (code, report) = audit(dir.path(), &store, &rx);
    assert_eq!(code, 3, "{report:#}");
    assert!(report["gaps"].as_array().unwrap().iter().any(|g| g["attribute"] == "crcl"));
}

#[test]
fn remote_adapter_requires_an_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let (store, rx) = fixture(dir.path());
    let path = dir.path().join("rx.json");
    std::fs::write(&path, rx.to_string()).unwrap();
    let out = hpkb(&["audit", "--store", arg(&store), "--adapter", "remote", arg(&path)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("HPKB_AGENT_ENDPOINT"));
}

#[test]
fn unreachable_agent_falls_back_to_the_deterministic_report() {
    let dir = tempfile::tempdir().unwrap();
    let (store, rx) = fixture(dir.path());
    let path = dir.path().join("rx.json");
    std::fs::write(&path, rx.to_string()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_hpkb"))
        .args(["audit", "--store", arg(&store), "--adapter", "remote", "--timeout", "2", arg(&path)])
        .env("HPKB_AGENT_ENDPOINT", "http://127.0.0.1:9/agent")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["incidents"].as_array().unwrap().len(), 2);
}

#[test]
fn build_refuses_to_overwrite_a_store() {
    let dir = tempfile::tempdir().unwrap();
    let (store, _) = fixture(dir.path());
    let out = hpkb(&["build", "--corpus", arg(&dir.path().join("corpus")), "--store", arg(&store)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn isr_writes_schema_and_replayable_log() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    assert!(hpkb(&["gen-corpus", "--seed", "3", "--n-docs", "20", "--out", arg(&corpus)]).status.success());
    let first = dir.path().join("first");
    let out = hpkb(&["isr", "--corpus", arg(&corpus), "--out", arg(&first), "--n-stable", "5"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stdout));
    let second = dir.path().join("second");
    let log = first.join("proposals.jsonl");
    let out = hpkb(&["isr", "--corpus", arg(&corpus), "--out", arg(&second), "--n-stable", "5", "--replay", arg(&log)]);
    assert!(out.status.success());
    assert_eq!(
        std::fs::read_to_string(first.join("schema.json")).unwrap(),
        std::fs::read_to_string(second.join("schema.json")).unwrap()
    );
}

/// Answers every request by echoing its envelope back with a non-ok status.
fn busy_agent() -> (String, std::thread::JoinHandle<Vec<String>>) {
    use std::io::{BufRead, BufReader, Read, Write};
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/agent", listener.local_addr().unwrap());
    let handle = std::thread::spawn(move || {
        let mut roles = Vec::new();
        for stream in listener.incoming().take(2) {
            let mut stream = stream.unwrap();
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut len = 0;
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                    len = v.trim().parse().unwrap();
                }
                if line == "\r\n" {
                    break;
                }
            }
            let mut body = vec![0; len];
            reader.read_exact(&mut body).unwrap();
            let mut env: Value = serde_json::from_slice(&body).unwrap();
            roles.push(env["role"].as_str().unwrap().to_string());
            env["status"] = json!("busy");
            let out = env.to_string();
            write!(stream, "HTTP/1.1 200 OK\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{out}", out.len())
                .unwrap();
        }
        roles
    });
    (url, handle)
}

#[test]
fn agent_envelopes_round_trip_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let (store, rx) = fixture(dir.path());
    let path = dir.path().join("rx.json");
    std::fs::write(&path, rx.to_string()).unwrap();
    let (url, agent) = busy_agent();
    let out = hpkb(&["audit", "--store", arg(&store), "--adapter", "remote", "--endpoint", &url, arg(&path)]);
    assert_eq!(out.status.code(), Some(2));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let reasons: Vec<&str> = report["incidents"].as_array().unwrap().iter().map(|i| i["reason"].as_str().unwrap()).collect();
    assert_eq!(reasons, vec!["agent status busy"; 2]);
    assert_eq!(agent.join().unwrap().len(), 2);
}
