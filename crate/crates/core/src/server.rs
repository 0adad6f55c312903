//! REST API over a [`Store`].
//!
//! All routes live under `/api`. An optional static directory (the web
//! client build) is served at `/`, with unknown paths falling back to its
//! `index.html`. Uploads accept JSON or text bodies as well as multipart
//! forms.

use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, FromRequest, Multipart, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tower_http::services::{ServeDir, ServeFile};
use tower_http::trace::TraceLayer;

use crate::agreement::{Disagreement, ResolutionSession};
use crate::error::ApiError;
use crate::model::{
    parse, parse_dialogue_value, parse_turn_value, parse_with, Dialogue, IngestWarning,
    LabelSchema, LabelValue, ParseError, ParseOptions, Turn,
};
use crate::recommend::{RecommenderFailure, RecommenderRegistry};
use crate::segment::{segment, to_dialogues, RawSegmentation, TurnFailure};
use crate::store::{is_valid_name, sanitize_name, Edit, EditOutcome, Store, StoreError};

const BODY_LIMIT: usize = 64 * 1024 * 1024;

#[derive(Clone)]
pub struct AppState {
    store: Arc<Store>,
    registry: RecommenderRegistry,
    allow_unknown_labels: bool,
}

impl AppState {
    /// Builds recommenders from the store's schema, if it has one.
    pub fn new(store: Arc<Store>) -> Self {
        let registry = store
            .schema()
            .map(|s| RecommenderRegistry::from_schema(&s))
            .unwrap_or_default();
        AppState {
            store,
            registry,
            allow_unknown_labels: false,
        }
    }

    pub fn with_registry(mut self, registry: RecommenderRegistry) -> Self {
        self.registry = registry;
        self
    }

    /// Default for uploads that do not pass `allow_unknown_labels`.
    pub fn allow_unknown_labels(mut self, allow: bool) -> Self {
        self.allow_unknown_labels = allow;
        self
    }

    pub fn store(&self) -> &Arc<Store> {
        &self.store
    }

    fn schema(&self) -> Result<Arc<LabelSchema>, ApiError> {
        Ok(self.store.schema()?)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, axum::Json(self)).into_response()
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    (status, axum::Json(body)).into_response()
}

fn ok<T: Serialize>(body: &T) -> ApiResult {
    Ok(json_response(StatusCode::OK, body))
}

fn created<T: Serialize>(body: &T) -> ApiResult {
    Ok(json_response(StatusCode::CREATED, body))
}

fn raw_json(text: String) -> Response {
    ([(header::CONTENT_TYPE, "application/json")], text).into_response()
}

fn parse_body<T: serde::de::DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    let mut de = serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(&mut de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let err = if inner.is_data() {
            ParseError::SchemaViolation {
                path,
                reason: inner.to_string(),
            }
        } else {
            ParseError::MalformedJson(inner.to_string())
        };
        ApiError::from(err)
    })
}

fn parse_index(raw: &str) -> ApiResult<usize> {
    raw.parse()
        .map_err(|_| ApiError::bad_request(format!("turn index `{raw}` is not a number")))
}

fn flag(query: &HashMap<String, String>, key: &str, default: bool) -> ApiResult<bool> {
    match query.get(key).map(String::as_str) {
        None => Ok(default),
        Some("" | "1" | "true" | "yes") => Ok(true),
        Some("0" | "false" | "no") => Ok(false),
        Some(other) => Err(ApiError::bad_request(format!(
            "`{key}` must be true or false, got `{other}`"
        ))),
    }
}

/// One uploaded file.
struct Upload {
    stem: Option<String>,
    bytes: Bytes,
}

fn is_multipart(headers: &HeaderMap) -> bool {
    headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("multipart/form-data"))
}

/// Reads a request body as a list of uploads: every file part of a multipart
/// form, or the whole body as one upload.
async fn uploads(req: Request) -> ApiResult<Vec<Upload>> {
    if is_multipart(req.headers()) {
        let mut form = Multipart::from_request(req, &())
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?;
        let mut out = Vec::new();
        while let Some(field) = form
            .next_field()
            .await
            .map_err(|e| ApiError::bad_request(e.body_text()))?
        {
            let stem = field
                .file_name()
                .map(|f| {
                    let f = f.rsplit(['/', '\\']).next().unwrap_or(f);
                    f.rsplit_once('.').map_or(f, |(s, _)| s).to_string()
                })
                .or_else(|| field.name().map(str::to_string))
                .filter(|s| !s.is_empty());
            let bytes = field
                .bytes()
                .await
                .map_err(|e| ApiError::bad_request(e.body_text()))?;
            out.push(Upload { stem, bytes });
        }
        Ok(out)
    } else {
        let bytes = Bytes::from_request(req, &())
            .await
            .map_err(|e| ApiError::new(e.status().as_u16(), "BadRequest", e.body_text()))?;
        Ok(vec![Upload { stem: None, bytes }])
    }
}

fn single_upload(mut files: Vec<Upload>) -> ApiResult<Upload> {
    match files.len() {
        1 => Ok(files.remove(0)),
        0 => Err(ApiError::bad_request("no file uploaded")),
        n => Err(ApiError::bad_request(format!(
            "expected one file, got {n}"
        ))),
    }
}

fn utf8(bytes: &[u8]) -> ApiResult<&str> {
    std::str::from_utf8(bytes).map_err(|e| ApiError::bad_request(format!("body is not UTF-8: {e}")))
}

/// Picks the dataset name: explicit query parameter, then the file's own
/// `name` field, then the uploaded file name, then a fresh `dataset-N`.
fn choose_name(
    store: &Store,
    explicit: Option<&String>,
    fallbacks: &[Option<&str>],
) -> ApiResult<String> {
    if let Some(name) = explicit {
        if !is_valid_name(name) {
            return Err(StoreError::InvalidName(name.clone()).into());
        }
        return Ok(name.clone());
    }
    if let Some(name) = fallbacks.iter().flatten().find(|n| !n.trim().is_empty()) {
        return Ok(sanitize_name(name.trim()));
    }
    let taken: Vec<String> = store.datasets().into_iter().map(|d| d.name).collect();
    Ok((1..)
        .map(|n| format!("dataset-{n}"))
        .find(|n| !taken.contains(n))
        .expect("unbounded"))
}

async fn run_blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(500, "Internal", e.to_string()))
}

async fn get_schema(State(app): State<AppState>) -> ApiResult {
    ok(&*app.schema()?)
}

async fn list_datasets(State(app): State<AppState>) -> ApiResult {
    ok(&app.store.datasets())
}

#[derive(Serialize)]
struct DatasetCreated<'a> {
    name: &'a str,
    dataset: &'a crate::model::DialogueCollection,
    warnings: &'a [IngestWarning],
}

async fn create_dataset(
    State(app): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
    req: Request,
) -> ApiResult {
    let schema = app.schema()?;
    let upload = single_upload(uploads(req).await?)?;
    let options = ParseOptions {
        allow_unknown_labels: flag(&query, "allow_unknown_labels", app.allow_unknown_labels)?,
    };
    let (collection, warnings) = parse_with(utf8(&upload.bytes)?, &schema, options)?;
    let name = choose_name(
        &app.store,
        query.get("name"),
        &[Some(collection.name.as_str()), upload.stem.as_deref()],
    )?;
    app.store.insert_dataset(&name, collection.clone())?;
    created(&DatasetCreated {
        name: &name,
        dataset: &collection,
        warnings: &warnings,
    })
}

#[derive(Serialize)]
struct RawCreated<'a> {
    name: &'a str,
    dataset: &'a crate::model::DialogueCollection,
    segmentation: &'a RawSegmentation,
    failures: &'a [TurnFailure],
}

async fn create_raw_dataset(
    State(app): State<AppState>,
    Query(query): Query<HashMap<String, String>>,
    req: Request,
) -> ApiResult {
    app.schema()?;
    let upload = single_upload(uploads(req).await?)?;
    let text = utf8(&upload.bytes)?.to_string();
    let name = choose_name(&app.store, query.get("name"), &[upload.stem.as_deref()])?;
    let registry = app.registry.clone();
    let label = name.clone();
    let (seg, out) = run_blocking(move || {
        let seg = segment(&text);
        let out = to_dialogues(&seg, &label, &registry);
        (seg, out)
    })
    .await?;
    app.store.insert_dataset(&name, out.collection.clone())?;
    created(&RawCreated {
        name: &name,
        dataset: &out.collection,
        segmentation: &seg,
        failures: &out.failures,
    })
}

async fn delete_dataset(State(app): State<AppState>, Path(name): Path<String>) -> ApiResult {
    app.store.delete_dataset(&name)?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Serialize)]
struct DialogueSummary<'a> {
    id: &'a str,
    name: &'a str,
    turns: usize,
}

async fn list_dialogues(State(app): State<AppState>, Path(name): Path<String>) -> ApiResult {
    let c = app.store.dataset(&name)?;
    let rows: Vec<_> = c
        .dialogues
        .iter()
        .map(|d| DialogueSummary {
            id: &d.id,
            name: &d.name,
            turns: d.turns.len(),
        })
        .collect();
    ok(&rows)
}

async fn export_dataset(State(app): State<AppState>, Path(name): Path<String>) -> ApiResult {
    let text = app.store.export_dataset(&name)?;
    let mut resp = raw_json(text);
    if let Ok(v) = format!("attachment; filename=\"{name}.json\"").parse() {
        resp.headers_mut().insert(header::CONTENT_DISPOSITION, v);
    }
    Ok(resp)
}

fn expect_dialogue(outcome: EditOutcome) -> Dialogue {
    match outcome {
        EditOutcome::Dialogue(d) => d,
        other => unreachable!("dialogue edit returned {other:?}"),
    }
}

fn expect_turn(outcome: EditOutcome) -> Turn {
    match outcome {
        EditOutcome::Turn(t) => t,
        other => unreachable!("turn edit returned {other:?}"),
    }
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct NewDialogue {
    #[serde(default)]
    name: Option<String>,
}

async fn create_dialogue(
    State(app): State<AppState>,
    Path(dataset): Path<String>,
    body: Bytes,
) -> ApiResult {
    let req: NewDialogue = if body.iter().all(u8::is_ascii_whitespace) {
        NewDialogue::default()
    } else {
        parse_body(&body)?
    };
    let d = expect_dialogue(app.store.mutate(&dataset, Edit::AddDialogue { name: req.name })?);
    created(&d)
}

async fn get_dialogue(
    State(app): State<AppState>,
    Path((dataset, id)): Path<(String, String)>,
) -> ApiResult {
    ok(&app.store.dialogue(&dataset, &id)?)
}

async fn replace_dialogue(
    State(app): State<AppState>,
    Path((dataset, id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let schema = app.schema()?;
    let mut value: Value = parse_body(&body)?;
    match value.as_object_mut() {
        Some(obj) => {
            obj.entry("id").or_insert_with(|| Value::String(id.clone()));
        }
        None => {
            return Err(ParseError::SchemaViolation {
                path: String::new(),
                reason: "expected a dialogue object".into(),
            }
            .into())
        }
    }
    let dialogue = parse_dialogue_value(value, &schema, "dialogue")?;
    if dialogue.id != id {
        return Err(ParseError::SchemaViolation {
            path: "dialogue.id".into(),
            reason: format!("body id `{}` does not match `{id}`", dialogue.id),
        }
        .into());
    }
    let d = expect_dialogue(app.store.mutate(&dataset, Edit::ReplaceDialogue { id, dialogue })?);
    ok(&d)
}

async fn delete_dialogue(
    State(app): State<AppState>,
    Path((dataset, id)): Path<(String, String)>,
) -> ApiResult {
    app.store.mutate(&dataset, Edit::DeleteDialogue { id })?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Rename {
    name: String,
}

async fn rename_dialogue(
    State(app): State<AppState>,
    Path((dataset, id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let Rename { name } = parse_body(&body)?;
    let d = expect_dialogue(app.store.mutate(&dataset, Edit::RenameDialogue { id, name })?);
    ok(&d)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NewTurn {
    usr: String,
    #[serde(default)]
    sys: Option<String>,
}

#[derive(Serialize)]
struct TurnCreated {
    turn: Turn,
    failures: Vec<RecommenderFailure>,
    #[serde(skip_serializing_if = "Option::is_none")]
    response_failure: Option<String>,
}

/// Runs the query through every recommender (and the response generator
/// when configured and no `sys` was given), then appends the turn.
async fn create_turn(
    State(app): State<AppState>,
    Path((dataset, id)): Path<(String, String)>,
    body: Bytes,
) -> ApiResult {
    let schema = app.schema()?;
    let req: NewTurn = parse_body(&body)?;
    if req.usr.trim().is_empty() {
        return Err(ParseError::SchemaViolation {
            path: "usr".into(),
            reason: "empty user query".into(),
        }
        .into());
    }
    app.store.dialogue(&dataset, &id)?;
    let registry = app.registry.clone();
    let generator = schema.response_generator.clone();
    let usr = req.usr.clone();
    let given_sys = req.sys;
    let (suggestions, sys) = run_blocking(move || {
        let suggestions = registry.suggest_all(&usr);
        let sys = match (given_sys, generator) {
            (Some(s), _) => Ok(s),
            (None, Some(g)) => g.generate(&usr),
            (None, None) => Ok(String::new()),
        };
        (suggestions, sys)
    })
    .await?;
    let (sys, response_failure) = match sys {
        Ok(s) => (s, None),
        Err(e) => (String::new(), Some(e.to_string())),
    };
    let turn = Turn {
        usr: req.usr,
        sys,
        labels: suggestions.values,
        ..Turn::default()
    };
    let turn = expect_turn(app.store.mutate(
        &dataset,
        Edit::AddTurn {
            dialogue_id: id,
            turn,
        },
    )?);
    created(&TurnCreated {
        turn,
        failures: suggestions.failures,
        response_failure,
    })
}

async fn replace_turn(
    State(app): State<AppState>,
    Path((dataset, id, index)): Path<(String, String, String)>,
    body: Bytes,
) -> ApiResult {
    let schema = app.schema()?;
    let index = parse_index(&index)?;
    let turn = parse_turn_value(parse_body(&body)?, index, &schema)?;
    let turn = expect_turn(app.store.mutate(
        &dataset,
        Edit::ReplaceTurn {
            dialogue_id: id,
            index,
            turn,
        },
    )?);
    ok(&turn)
}

async fn delete_turn(
    State(app): State<AppState>,
    Path((dataset, id, index)): Path<(String, String, String)>,
) -> ApiResult {
    let index = parse_index(&index)?;
    app.store.mutate(
        &dataset,
        Edit::DeleteTurn {
            dialogue_id: id,
            index,
        },
    )?;
    Ok(StatusCode::NO_CONTENT.into_response())
}

fn session_view(id: &str, s: &ResolutionSession) -> Value {
    let mut v: Value = serde_json::from_str(&s.to_json()).expect("session JSON");
    if let Some(obj) = v.as_object_mut() {
        obj.insert("id".into(), json!(id));
        obj.insert("unresolved".into(), json!(s.unresolved()));
    }
    v
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionUpload {
    annotators: Vec<AnnotatorFile>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AnnotatorFile {
    annotator: String,
    dataset: Value,
}

/// Annotator-tagged dataset files, either as one JSON document or as a
/// multipart form with one file per annotator (named by file stem).
async fn create_sessions(State(app): State<AppState>, req: Request) -> ApiResult {
    let schema = app.schema()?;
    let multipart = is_multipart(req.headers());
    let files = uploads(req).await?;
    let mut tagged: Vec<(String, String)> = Vec::new();
    if multipart {
        for (i, f) in files.into_iter().enumerate() {
            let annotator = f.stem.unwrap_or_else(|| format!("annotator-{}", i + 1));
            tagged.push((annotator, utf8(&f.bytes)?.to_string()));
        }
    } else {
        let upload = single_upload(files)?;
        let body: SessionUpload = parse_body(&upload.bytes)?;
        for a in body.annotators {
            tagged.push((a.annotator, a.dataset.to_string()));
        }
    }
    let mut copies = Vec::new();
    for (annotator, text) in tagged {
        let c = parse(&text, &schema).map_err(|e| {
            let mut api = ApiError::from(e);
            api.message = format!("annotator `{annotator}`: {}", api.message);
            api
        })?;
        copies.extend(c.dialogues.into_iter().map(|d| (annotator.clone(), d)));
    }
    let store = app.store.clone();
    let sessions = run_blocking(move || store.create_sessions(copies)).await??;
    let views: Vec<Value> = sessions.iter().map(|(id, s)| session_view(id, s)).collect();
    created(&views)
}

async fn list_sessions(State(app): State<AppState>) -> ApiResult {
    ok(&app.store.sessions())
}

async fn get_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = app.store.session(&id)?;
    ok(&session_view(&id, &s))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AcceptBody {
    turn: usize,
    label: String,
    #[serde(default)]
    value: Option<LabelValue>,
}

async fn accept(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> ApiResult {
    let req: AcceptBody = parse_body(&body)?;
    let d: Disagreement = app.store.accept(&id, req.turn, &req.label, req.value)?;
    ok(&d)
}

async fn session_stats(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    Ok(raw_json(app.store.session(&id)?.stats().to_canonical_json()))
}

async fn session_kappa(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let schema = app.schema()?;
    ok(&app.store.session(&id)?.kappa_report(&schema))
}

async fn export_session(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult {
    let s = app.store.session(&id)?;
    let merged = s
        .export()
        .map_err(|e| ApiError::from(StoreError::Session(e.into())))?;
    ok(&merged)
}

async fn api_not_found() -> ApiError {
    ApiError::new(404, "NotFound", "no such endpoint")
}

/// Gives bodyless error responses (method not allowed, payload too large,
/// extractor rejections) an [`ApiError`] body.
async fn ensure_error_body(req: Request, next: Next) -> Response {
    let resp = next.run(req).await;
    let status = resp.status();
    if !(status.is_client_error() || status.is_server_error()) {
        return resp;
    }
    let is_json = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    if is_json {
        return resp;
    }
    let code = match status {
        StatusCode::METHOD_NOT_ALLOWED => "MethodNotAllowed",
        StatusCode::PAYLOAD_TOO_LARGE => "PayloadTooLarge",
        StatusCode::UNSUPPORTED_MEDIA_TYPE => "UnsupportedMediaType",
        StatusCode::NOT_FOUND => "NotFound",
        s if s.is_server_error() => "Internal",
        _ => "BadRequest",
    };
    let reason = status.canonical_reason().unwrap_or("error");
    ApiError::new(status.as_u16(), code, reason).into_response()
}

/// The `/api` routes.
pub fn api_router(state: AppState) -> Router {
    let api = Router::new()
        .route("/schema", get(get_schema))
        .route("/datasets", get(list_datasets).post(create_dataset))
        .route("/datasets/raw", post(create_raw_dataset))
        .route("/datasets/{name}", axum::routing::delete(delete_dataset))
        .route("/datasets/{name}/export", get(export_dataset))
        .route(
            "/datasets/{name}/dialogues",
            get(list_dialogues).post(create_dialogue),
        )
        .route(
            "/datasets/{name}/dialogues/{id}",
            get(get_dialogue)
                .put(replace_dialogue)
                .delete(delete_dialogue),
        )
        .route("/datasets/{name}/dialogues/{id}/name", put(rename_dialogue))
        .route("/datasets/{name}/dialogues/{id}/turns", post(create_turn))
        .route(
            "/datasets/{name}/dialogues/{id}/turns/{index}",
            put(replace_turn).delete(delete_turn),
        )
        .route("/sessions", get(list_sessions).post(create_sessions))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/accept", post(accept))
        .route("/sessions/{id}/stats", get(session_stats))
        .route("/sessions/{id}/kappa", get(session_kappa))
        .route("/sessions/{id}/export", get(export_session))
        .fallback(api_not_found)
        .layer(middleware::from_fn(ensure_error_body))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .with_state(state);
    Router::new().nest("/api", api)
}

/// The full application: API plus optional static client.
pub fn app(state: AppState, static_dir: Option<PathBuf>) -> Router {
    let router = api_router(state);
    let router = match static_dir {
        Some(dir) => {
            let index = dir.join("index.html");
            router.fallback_service(ServeDir::new(dir).fallback(ServeFile::new(index)))
        }
        None => router,
    };
    router.layer(TraceLayer::new_for_http())
}

pub struct ServeConfig {
    pub host: String,
    pub port: u16,
    pub static_dir: Option<PathBuf>,
}

/// Binds and serves until Ctrl-C.
pub async fn serve(state: AppState, config: ServeConfig) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind((config.host.as_str(), config.port)).await?;
    let addr: SocketAddr = listener.local_addr()?;
    tracing::info!(%addr, root = %state.store.root().display(), "listening");
    axum::serve(listener, app(state, config.static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
