//! In-process requests against the router.

use std::sync::Arc;

use axum::body::Body;
use axum::http::{Method, Request};
use axum::Router;
use dialign::server::{app, AppState};
use dialign::store::Store;
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

pub struct TestApp {
    pub dir: tempfile::TempDir,
    pub store: Arc<Store>,
    pub router: Router,
}

pub struct Response {
    pub status: u16,
    pub content_type: Option<String>,
    pub text: String,
}

impl Response {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.text).unwrap_or_else(|e| panic!("{e}: {}", self.text))
    }
}

/// A workspace holding `schema_json` as its schema file.
pub fn with_schema(schema_json: &str) -> TestApp {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("schema.json"), schema_json).unwrap();
    open(dir)
}

pub fn open(dir: tempfile::TempDir) -> TestApp {
    let (store, issues) = Store::open(dir.path(), None).unwrap();
    assert!(issues.is_empty(), "{issues:?}");
    let store = Arc::new(store);
    let router = app(AppState::new(store.clone()), None);
    TestApp { dir, store, router }
}

impl TestApp {
    pub async fn send(&self, method: &str, uri: &str, content_type: Option<&str>, body: impl Into<Body>) -> Response {
        let mut req = Request::builder().method(Method::from_bytes(method.as_bytes()).unwrap()).uri(uri);
        if let Some(ct) = content_type {
            req = req.header("content-type", ct);
        }
        let resp = self.router.clone().oneshot(req.body(body.into()).unwrap()).await.unwrap();
        let status = resp.status().as_u16();
        let content_type = resp
            .headers()
            .get("content-type")
            .map(|v| v.to_str().unwrap().to_string());
        let bytes = resp.into_body().collect().await.unwrap().to_bytes();
        Response {
            status,
            content_type,
            text: String::from_utf8(bytes.to_vec()).unwrap(),
        }
    }

    pub async fn get(&self, uri: &str) -> Response {
        self.send("GET", uri, None, Body::empty()).await
    }

    pub async fn json(&self, method: &str, uri: &str, body: Value) -> Response {
        self.send(method, uri, Some("application/json"), body.to_string()).await
    }

    /// Posts files as a multipart form, one part per `(file name, content)`.
    pub async fn multipart(&self, uri: &str, files: &[(&str, &str)]) -> Response {
        let boundary = "dialign-test-boundary";
        let mut body = String::new();
        for (name, content) in files {
            body.push_str(&format!(
                "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"{name}\"\r\nContent-Type: application/octet-stream\r\n\r\n{content}\r\n"
            ));
        }
        body.push_str(&format!("--{boundary}--\r\n"));
        self.send(
            "POST",
            uri,
            Some(&format!("multipart/form-data; boundary={boundary}")),
            body,
        )
        .await
    }
}
