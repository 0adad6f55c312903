mod common;

use std::time::{Duration, Instant};

use common::stub::{self, Reply};
use dialign::recommend::{transform, RecommendError, RecommenderBinding};
use dialign::{load_schema, parse, Cardinality, LabelDef, LabelValue, RecommenderRegistry};
use serde_json::{json, Value};

fn uact() -> LabelDef {
    LabelDef::classification("uact", Cardinality::Multi, ["inform", "request"])
}

fn external(url: &str, timeout_ms: u64) -> RecommenderBinding {
    RecommenderBinding::External {
        url: url.to_string(),
        timeout_ms,
    }
}

#[test]
fn request_and_response_follow_the_protocol() {
    let server = stub::spawn(|_, _| {
        Reply::json(r#"{"value":{"kind":"classification","selected":["request"]}}"#)
    });
    let url = format!("{}/predict", server.url);
    let value = transform(&external(&url, 2000), &uact(), "book a table").unwrap();
    assert_eq!(value, LabelValue::classes(["request"]));
    let requests = server.requests();
    assert_eq!(requests.len(), 1);
    assert_eq!(requests[0].0, "/predict");
    let body: Value = serde_json::from_str(&requests[0].1).unwrap();
    assert_eq!(body, json!({"label": "uact", "query": "book a table"}));
}

#[test]
fn out_of_schema_prediction_is_rejected() {
    let server = stub::spawn(|_, _| {
        Reply::json(r#"{"value":{"kind":"classification","selected":["dance"]}}"#)
    });
    let err = transform(&external(&server.url, 2000), &uact(), "hi").unwrap_err();
    assert!(matches!(err, RecommendError::InvalidPrediction { .. }), "{err:?}");
}

#[test]
fn wrong_kind_is_rejected() {
    let server = stub::spawn(|_, _| Reply::json(r#"{"value":{"kind":"slot_value","pairs":{}}}"#));
    let err = transform(&external(&server.url, 2000), &uact(), "hi").unwrap_err();
    assert!(matches!(err, RecommendError::InvalidPrediction { .. }), "{err:?}");
}

#[test]
fn slow_model_times_out_promptly() {
    let server = stub::spawn(|_, _| {
        Reply::json(r#"{"value":{"kind":"classification","selected":[]}}"#)
            .after(Duration::from_millis(1500))
    });
    let started = Instant::now();
    let err = transform(&external(&server.url, 200), &uact(), "hi").unwrap_err();
    assert!(matches!(err, RecommendError::ExternalTimeout { timeout_ms: 200, .. }), "{err:?}");
    assert!(started.elapsed() < Duration::from_millis(1200));
}

#[test]
fn garbage_and_error_statuses_are_protocol_errors() {
    let server = stub::spawn(|path, _| match path {
        "/garbage" => Reply::json("not json"),
        _ => Reply {
            status: 500,
            body: "{}".into(),
            delay: Duration::ZERO,
        },
    });
    for path in ["/garbage", "/fail"] {
        let url = format!("{}{path}", server.url);
        let err = transform(&external(&url, 2000), &uact(), "hi").unwrap_err();
        assert!(matches!(err, RecommendError::ExternalProtocolError { .. }), "{path}: {err:?}");
    }
}

#[test]
fn unreachable_model_is_reported() {
    let port = std::net::TcpListener::bind("127.0.0.1:0")
        .unwrap()
        .local_addr()
        .unwrap()
        .port();
    let err = transform(&external(&format!("http://127.0.0.1:{port}"), 2000), &uact(), "hi")
        .unwrap_err();
    assert!(matches!(err, RecommendError::ExternalUnavailable { .. }), "{err:?}");
}

#[test]
fn remote_models_are_queried_concurrently() {
    let server = stub::spawn(|_, body| {
        let label = serde_json::from_str::<Value>(body).unwrap()["label"]
            .as_str()
            .unwrap()
            .to_string();
        let value = if label == "uact" {
            r#"{"kind":"classification","selected":["inform"]}"#
        } else {
            r#"{"kind":"classification","selected":["hotel"]}"#
        };
        Reply::json(format!(r#"{{"value":{value}}}"#)).after(Duration::from_millis(400))
    });
    let schema = load_schema(
        &json!({"labels": [
            {"name": "uact", "kind": "classification", "values": ["inform", "request"],
             "recommender": {"type": "external", "url": server.url, "timeout_ms": 3000}},
            {"name": "domain", "kind": "classification", "cardinality": "single",
             "values": ["hotel", "taxi"],
             "recommender": {"type": "external", "url": server.url, "timeout_ms": 3000}}
        ]})
        .to_string(),
    )
    .unwrap();
    let registry = RecommenderRegistry::from_schema(&schema);
    let started = Instant::now();
    let s = registry.suggest_all("I need a hotel");
    assert!(started.elapsed() < Duration::from_millis(750), "{:?}", started.elapsed());
    assert!(s.failures.is_empty(), "{:?}", s.failures);
    assert_eq!(s.values["uact"], LabelValue::classes(["inform"]));
    assert_eq!(s.values["domain"], LabelValue::classes(["hotel"]));
}

fn external_schema(url: &str, timeout_ms: u64) -> String {
    json!({"labels": [
        {"name": "uact", "kind": "classification", "values": ["inform", "request"],
         "recommender": {"type": "external", "url": url, "timeout_ms": timeout_ms}},
        {"name": "greeting", "kind": "classification", "cardinality": "single",
         "values": ["yes", "no"],
         "recommender": {"type": "constant",
                         "value": {"kind": "classification", "selected": ["no"]}}}
    ]})
    .to_string()
}

async fn new_turn(app: &common::api::TestApp, usr: &str) -> common::api::Response {
    let r = app.json("POST", "/api/datasets?name=ds", json!({"dialogues": []})).await;
    assert_eq!(r.status, 201, "{}", r.text);
    let r = app.json("POST", "/api/datasets/ds/dialogues", json!({})).await;
    assert_eq!(r.status, 201, "{}", r.text);
    app.json(
        "POST",
        "/api/datasets/ds/dialogues/dialogue-0001/turns",
        json!({"usr": usr}),
    )
    .await
}

#[tokio::test]
async fn valid_prediction_is_persisted() {
    let server = stub::spawn(|_, _| {
        Reply::json(r#"{"value":{"kind":"classification","selected":["request"]}}"#)
    });
    let app = common::api::with_schema(&external_schema(&server.url, 2000));
    let r = new_turn(&app, "can I book a table").await;
    assert_eq!(r.status, 201, "{}", r.text);
    let body = r.json();
    assert_eq!(body["failures"], json!([]));
    assert_eq!(body["turn"]["labels"]["uact"]["selected"], json!(["request"]));
    assert_eq!(body["turn"]["labels"]["greeting"]["selected"], json!(["no"]));
    let on_disk = std::fs::read_to_string(app.store.dataset_path("ds")).unwrap();
    let c = parse(&on_disk, &app.store.schema().unwrap()).unwrap();
    let turn = &c.dialogues[0].turns[0];
    assert_eq!(turn.labels["uact"], LabelValue::classes(["request"]));
}

#[tokio::test]
async fn invalid_prediction_leaves_label_blank() {
    let server = stub::spawn(|_, _| {
        Reply::json(r#"{"value":{"kind":"classification","selected":["dance"]}}"#)
    });
    let app = common::api::with_schema(&external_schema(&server.url, 2000));
    let r = new_turn(&app, "hello").await;
    assert_eq!(r.status, 201, "{}", r.text);
    let body = r.json();
    assert!(body["turn"]["labels"].get("uact").is_none());
    assert_eq!(body["failures"][0]["label"], "uact");
    assert!(body["failures"][0]["error"].as_str().unwrap().contains("rejected"));
}

#[tokio::test(flavor = "multi_thread")]
async fn timeout_degrades_to_blank_label() {
    let server = stub::spawn(|_, _| {
        Reply::json(r#"{"value":{"kind":"classification","selected":["inform"]}}"#)
            .after(Duration::from_millis(1500))
    });
    let app = common::api::with_schema(&external_schema(&server.url, 150));
    let r = new_turn(&app, "hello").await;
    assert_eq!(r.status, 201, "{}", r.text);
    let body = r.json();
    assert!(body["turn"]["labels"].get("uact").is_none());
    assert_eq!(body["turn"]["labels"]["greeting"]["selected"], json!(["no"]));
    assert_eq!(body["failures"][0]["label"], "uact");
    assert!(body["failures"][0]["error"].as_str().unwrap().contains("timed out"));
    let listed = app.get("/api/datasets/ds/dialogues/dialogue-0001").await.json();
    assert_eq!(listed["turns"].as_array().unwrap().len(), 1);
}

#[tokio::test]
async fn response_generator_fills_system_side() {
    let server = stub::spawn(|path, body| {
        assert_eq!(path, "/respond");
        let q: Value = serde_json::from_str(body).unwrap();
        Reply::json(json!({"sys": format!("you said: {}", q["query"].as_str().unwrap())}).to_string())
    });
    let schema = json!({
        "labels": [{"name": "uact", "kind": "classification", "values": ["inform"]}],
        "response_generator": {"url": format!("{}/respond", server.url), "timeout_ms": 2000}
    });
    let app = common::api::with_schema(&schema.to_string());
    let r = new_turn(&app, "hi").await;
    assert_eq!(r.status, 201, "{}", r.text);
    assert_eq!(r.json()["turn"]["sys"], "you said: hi");
}
