mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::{Duration, Instant};

use serde_json::{json, Value};

const SCHEMA: &str = r#"{"labels": [
  {"name": "domain", "kind": "classification", "cardinality": "single", "values": ["A", "B"]}
]}"#;

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("schema.json"), SCHEMA).unwrap();
        Workspace { dir }
    }

    fn file(&self, name: &str, content: &str) -> PathBuf {
        let path = self.dir.path().join(name);
        std::fs::write(&path, content).unwrap();
        path
    }

    fn run(&self, args: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_dialign"))
            .args(args)
            .current_dir(self.dir.path())
            .env_remove("DIALIGN_CONFIG")
            .env("RUST_LOG", "off")
            .output()
            .unwrap()
    }

    fn path(&self) -> &Path {
        self.dir.path()
    }
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

/// One dialogue `d1` whose single-choice label takes `votes` per turn.
fn annotation(votes: &[&str]) -> String {
    let turns: Vec<Value> = votes
        .iter()
        .enumerate()
        .map(|(i, v)| {
            json!({"usr": format!("u{i}"),
                   "labels": {"domain": {"kind": "classification", "selected": [v]}}})
        })
        .collect();
    json!({"dialogues": [{"id": "d1", "turns": turns}]}).to_string()
}

#[test]
fn segment_prints_canonical_dataset() {
    let ws = Workspace::new();
    ws.file("calls.txt", "hello\n\nhi there\n===\nbye\n");
    let out = ws.run(&["segment", "calls.txt"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["name"], "calls");
    assert_eq!(v["dialogues"].as_array().unwrap().len(), 2);
    assert_eq!(v["dialogues"][0]["turns"][0]["sys"], "hi there");

    let out = ws.run(&["segment", "calls.txt", "-o", "calls.json"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(ws.path().join("calls.json")).unwrap(), stdout(&ws.run(&["segment", "calls.txt"])));

    ws.file("empty.txt", "");
    let out = ws.run(&["segment", "empty.txt"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(serde_json::from_str::<Value>(&stdout(&out)).unwrap()["dialogues"], json!([]));

    let out = ws.run(&["segment", "missing.txt"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.txt"));
}

#[test]
fn validate_reports_counts_and_paths() {
    let ws = Workspace::new();
    ws.file("good.json", &annotation(&["A", "B", "A"]));
    let out = ws.run(&["validate", "good.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    assert_eq!(stdout(&out), "ok: 1 dialogues, 3 turns\n");

    ws.file("bad.json", &annotation(&["A", "Z"]));
    let out = ws.run(&["validate", "bad.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("dialogues[0].turns[1].labels.domain"), "{}", stderr(&out));

    ws.file("broken.json", "{\"dialogues\": [");
    assert_eq!(ws.run(&["validate", "broken.json"]).status.code(), Some(1));

    let other = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_dialign"))
        .args(["validate", ws.path().join("good.json").to_str().unwrap()])
        .current_dir(other.path())
        .env_remove("DIALIGN_CONFIG")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = ws.run(&["--config", "nope.json", "validate", "good.json"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_matches_known_values() {
    let ws = Workspace::new();
    ws.file("a.json", &annotation(&["A", "A", "B", "B"]));
    ws.file("b.json", &annotation(&["A", "B", "B", "B"]));
    ws.file("c.json", &annotation(&["A", "A", "B", "B"]));

    let out = ws.run(&["stats", "a.json", "c.json"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["kappa"], 1.0);
    assert_eq!(v["total_errors"], 0);

    let out = ws.run(&["stats", "a.json", "b.json"]);
    let v: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(v["kappa"], 0.5);
    assert_eq!(v["total_errors"], 1);
    assert_eq!(v["total_annotations"], 8);

    let out = ws.run(&["--json-errors", "stats", "a.json"]);
    assert_eq!(out.status.code(), Some(1));
    let err: Value = serde_json::from_str(stderr(&out).trim()).unwrap();
    assert_eq!(err["code"], "TooFewAnnotators");
    assert_eq!(err["status"], 422);
}

#[tokio::test]
async fn stats_output_matches_the_server() {
    let ws = Workspace::new();
    let a = annotation(&["A", "A", "B", "B"]);
    let b = annotation(&["A", "B", "B", "B"]);
    ws.file("a.json", &a);
    ws.file("b.json", &b);
    let cli = stdout(&ws.run(&["stats", "a.json", "b.json"]));

    let app = common::api::with_schema(SCHEMA);
    let r = app.multipart("/api/sessions", &[("a.json", &a), ("b.json", &b)]).await;
    assert_eq!(r.status, 201, "{}", r.text);
    let api = app.get("/api/sessions/d1/stats").await;
    assert_eq!(api.text, cli);
}

#[test]
fn resolve_requires_explicit_tie_breaking() {
    let ws = Workspace::new();
    ws.file("a.json", &annotation(&["A", "A"]));
    ws.file("b.json", &annotation(&["A", "B"]));

    let out = ws.run(&["resolve", "a.json", "b.json"]);
    assert_eq!(out.status.code(), Some(2));

    let out = ws.run(&["resolve", "a.json", "b.json", "--majority"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("tie: d1 turn 1 label `domain`"), "{}", stderr(&out));
    assert!(stdout(&out).is_empty());

    let first = ws.run(&["resolve", "a.json", "b.json", "--majority", "--break-ties"]);
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let again = ws.run(&["resolve", "b.json", "a.json", "--majority", "--break-ties"]);
    assert_eq!(stdout(&first), stdout(&again));
    let v: Value = serde_json::from_str(&stdout(&first)).unwrap();
    assert_eq!(v["name"], "merged");
    assert_eq!(v["dialogues"][0]["turns"][1]["labels"]["domain"]["selected"], json!(["A"]));
}

#[test]
fn serve_answers_over_http() {
    let ws = Workspace::new();
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let mut child = Command::new(env!("CARGO_BIN_EXE_dialign"))
        .args(["serve", "--port", &port.to_string()])
        .current_dir(ws.path())
        .env("RUST_LOG", "off")
        .spawn()
        .unwrap();
    let url = format!("http://127.0.0.1:{port}/api/schema");
    let started = Instant::now();
    let body = loop {
        match ureq::get(&url).call() {
            Ok(mut r) => break r.body_mut().read_to_string().unwrap(),
            Err(_) if started.elapsed() < Duration::from_secs(10) => {
                std::thread::sleep(Duration::from_millis(50))
            }
            Err(e) => {
                child.kill().unwrap();
                panic!("server did not start: {e}");
            }
        }
    };
    child.kill().unwrap();
    child.wait().unwrap();
    assert_eq!(serde_json::from_str::<Value>(&body).unwrap()["labels"][0]["name"], "domain");
}
