//! HTTP front end for the analysis engine.
//!
//! Datasets live in memory (and optionally in a directory of CSV files that
//! is loaded at startup and written on upload). `/analyze` is a pure
//! function of its request body. Incremental sessions are the only other
//! state; they expire after an idle TTL.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};
use std::time::{Duration, Instant};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use ir_core::analysis::{FeedSummary, IncrementalSession, IncrementalStart};
use ir_core::dataset::{ingest_csv, ingest_csv_reader, Dataset, DatasetSummary, SchemaHint};
use ir_core::{run_analysis, AnalysisError, AnalysisRequest};
use serde::{Deserialize, Serialize};
use serde_json::json;

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_SESSION_TTL: Duration = Duration::from_secs(3600);

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    detail: Option<serde_json::Value>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.code, "message": self.message });
        if let Some(detail) = self.detail {
            body["response"] = detail;
        }
        (self.status, axum::Json(body)).into_response()
    }
}

impl From<AnalysisError> for ApiError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::AllUndefined(resp) => Self {
                detail: serde_json::to_value(&*resp).ok(),
                ..Self::new(
                    StatusCode::UNPROCESSABLE_ENTITY,
                    "all_undefined",
                    "every measure is undefined",
                )
            },
            AnalysisError::Closed => Self::new(StatusCode::CONFLICT, "session_closed", "session is closed"),
            other => Self::new(StatusCode::BAD_REQUEST, "validation", other.to_string()),
        }
    }
}

type ApiResult<T = Response> = Result<T, ApiError>;

struct SessionEntry {
    session: Arc<Mutex<IncrementalSession>>,
    last_used: Instant,
}

pub struct AppState {
    datasets: RwLock<BTreeMap<String, Arc<Dataset>>>,
    dataset_dir: Option<PathBuf>,
    sessions: Mutex<HashMap<String, SessionEntry>>,
    session_ttl: Duration,
}

impl AppState {
    pub fn new(dataset_dir: Option<PathBuf>, session_ttl: Duration) -> Self {
        Self {
            datasets: RwLock::new(BTreeMap::new()),
            dataset_dir,
            sessions: Mutex::new(HashMap::new()),
            session_ttl,
        }
    }

    /// State preloaded with every `*.csv` in `dir`. A sibling
    /// `<name>.schema.json` is used as the schema hint.
    pub fn with_dataset_dir(dir: PathBuf, session_ttl: Duration) -> Result<Self, String> {
        let state = Self::new(Some(dir.clone()), session_ttl);
        let mut entries: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| format!("{}: {e}", dir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        entries.sort();
        for path in entries {
            let hint = read_hint(&path)?;
            let ds = ingest_csv(&path, hint.as_ref()).map_err(|e| format!("{}: {e}", path.display()))?;
            state.insert(Arc::new(ds));
        }
        Ok(state)
    }

    pub fn insert(&self, dataset: Arc<Dataset>) {
        self.datasets
            .write()
            .unwrap()
            .insert(dataset.name().to_string(), dataset);
    }

    pub fn dataset(&self, name: &str) -> Option<Arc<Dataset>> {
        self.datasets.read().unwrap().get(name).cloned()
    }

    fn session(&self, id: &str) -> ApiResult<Arc<Mutex<IncrementalSession>>> {
        let mut sessions = self.sessions.lock().unwrap();
        self.sweep(&mut sessions);
        let entry = sessions
            .get_mut(id)
            .ok_or_else(|| ApiError::not_found(format!("unknown or expired session `{id}`")))?;
        entry.last_used = Instant::now();
        Ok(Arc::clone(&entry.session))
    }

    fn sweep(&self, sessions: &mut HashMap<String, SessionEntry>) {
        let ttl = self.session_ttl;
        sessions.retain(|_, e| e.last_used.elapsed() < ttl);
    }

    /// Drops sessions idle for longer than the TTL.
    pub fn expire_sessions(&self) {
        let mut sessions = self.sessions.lock().unwrap();
        self.sweep(&mut sessions);
    }
}

fn read_hint(csv_path: &Path) -> Result<Option<SchemaHint>, String> {
    let stem = csv_path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    let hint_path = csv_path.with_file_name(format!("{stem}.schema.json"));
    if !hint_path.exists() {
        return Ok(None);
    }
    let text = fs::read_to_string(&hint_path).map_err(|e| format!("{}: {e}", hint_path.display()))?;
    serde_json::from_str(&text)
        .map(Some)
        .map_err(|e| format!("{}: {e}", hint_path.display()))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/datasets", get(list_datasets).post(upload_dataset))
        .route("/datasets/{name}/schema", get(dataset_schema))
        .route("/analyze", post(analyze))
        .route("/analyze/incremental/start", post(incremental_start))
        .route("/analyze/incremental/feed", post(incremental_feed))
        .route("/analyze/incremental/snapshot", post(incremental_snapshot))
        .route("/analyze/incremental/close", post(incremental_close))
        .with_state(state)
}

fn json_body<T: Serialize>(status: StatusCode, value: &T) -> ApiResult {
    let body = serde_json::to_vec(value).map_err(|e| ApiError::internal(e.to_string()))?;
    Ok((
        status,
        [(header::CONTENT_TYPE, HeaderValue::from_static("application/json"))],
        body,
    )
        .into_response())
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> T + Send + 'static) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))
}

async fn list_datasets(State(state): State<Arc<AppState>>) -> ApiResult {
    let list: Vec<DatasetSummary> = state.datasets.read().unwrap().values().map(|d| d.summary()).collect();
    json_body(StatusCode::OK, &list)
}

async fn dataset_schema(State(state): State<Arc<AppState>>, UrlPath(name): UrlPath<String>) -> ApiResult {
    let ds = state
        .dataset(&name)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset `{name}`")))?;
    json_body(StatusCode::OK, &ds.summary())
}

#[derive(Deserialize)]
struct UploadQuery {
    name: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct JsonUpload {
    name: String,
    csv: String,
    #[serde(default)]
    schema: Option<SchemaHint>,
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.len() <= 128
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

/// Accepts either a raw CSV body with `?name=` or a JSON body
/// `{name, csv, schema?}`.
async fn upload_dataset(
    State(state): State<Arc<AppState>>,
    Query(query): Query<UploadQuery>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult {
    let is_json = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|v| v.starts_with("application/json"));
    let (name, csv, hint) = if is_json {
        let up: JsonUpload = parse_json(&body)?;
        (up.name, up.csv.into_bytes(), up.schema)
    } else {
        let name = query
            .name
            .ok_or_else(|| ApiError::bad_request("raw CSV uploads need a `name` query parameter"))?;
        (name, body.to_vec(), None)
    };
    if !valid_name(&name) {
        return Err(ApiError::bad_request(format!(
            "dataset name `{name}` must use letters, digits, `_`, `-` or `.`"
        )));
    }
    if state.dataset(&name).is_some() {
        return Err(conflict(&name));
    }

    let parse_name = name.clone();
    let parse_hint = hint.clone();
    let dataset = blocking(move || ingest_csv_reader(&parse_name, csv.as_slice(), parse_hint.as_ref()))
        .await?
        .map_err(|e| ingest_error(e.to_string()))?;

    let summary = dataset.summary();
    let mut datasets = state.datasets.write().unwrap();
    if datasets.contains_key(&name) {
        return Err(conflict(&name));
    }
    if let Some(dir) = &state.dataset_dir {
        persist(dir, &dataset, hint.as_ref()).map_err(|e| ApiError::internal(format!("persisting `{name}`: {e}")))?;
    }
    datasets.insert(name, Arc::new(dataset));
    drop(datasets);
    json_body(StatusCode::CREATED, &summary)
}

fn ingest_error(message: String) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "ingest", message)
}

fn conflict(name: &str) -> ApiError {
    ApiError::new(
        StatusCode::CONFLICT,
        "conflict",
        format!("dataset `{name}` already exists"),
    )
}

fn persist(dir: &Path, dataset: &Dataset, hint: Option<&SchemaHint>) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let file = fs::File::create(dir.join(format!("{}.csv", dataset.name())))?;
    dataset
        .write_csv(std::io::BufWriter::new(file))
        .map_err(std::io::Error::other)?;
    // The inferred schema is stored too, so a reload cannot infer differently.
    let mut schema: SchemaHint = dataset
        .schema()
        .fields
        .iter()
        .map(|f| (f.name.clone(), f.kind))
        .collect();
    if let Some(h) = hint {
        schema.extend(h.iter().map(|(k, v)| (k.clone(), *v)));
    }
    let text = serde_json::to_string_pretty(&schema).map_err(std::io::Error::other)?;
    fs::write(dir.join(format!("{}.schema.json", dataset.name())), text)
}

async fn analyze(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let request: AnalysisRequest = parse_json(&body)?;
    let dataset = state
        .dataset(&request.dataset)
        .ok_or_else(|| ApiError::not_found(format!("unknown dataset `{}`", request.dataset)))?;
    let started = Instant::now();
    let result = blocking(move || run_analysis(&dataset, &request).map(|r| serde_json::to_vec(&r))).await??;
    let body = result.map_err(|e| ApiError::internal(e.to_string()))?;
    let timing = format!("analyze;dur={:.3}", started.elapsed().as_secs_f64() * 1000.0);
    let mut resp = (StatusCode::OK, body).into_response();
    resp.headers_mut()
        .insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
    if let Ok(v) = HeaderValue::from_str(&timing) {
        resp.headers_mut().insert("server-timing", v);
    }
    Ok(resp)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SessionRef {
    session_id: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FeedRequest {
    session_id: String,
    records: Vec<serde_json::Map<String, serde_json::Value>>,
}

#[derive(Serialize)]
struct FeedResponse {
    session_id: String,
    #[serde(flatten)]
    summary: FeedSummary,
}

async fn incremental_start(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let start: IncrementalStart = parse_json(&body)?;
    let session = IncrementalSession::start(start)?;
    let id = uuid::Uuid::new_v4().to_string();
    {
        let mut sessions = state.sessions.lock().unwrap();
        state.sweep(&mut sessions);
        sessions.insert(
            id.clone(),
            SessionEntry {
                session: Arc::new(Mutex::new(session)),
                last_used: Instant::now(),
            },
        );
    }
    json_body(
        StatusCode::CREATED,
        &json!({ "session_id": id, "idle_ttl_secs": state.session_ttl.as_secs() }),
    )
}

async fn incremental_feed(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: FeedRequest = parse_json(&body)?;
    let session = state.session(&req.session_id)?;
    let records = req.records;
    let summary = blocking(move || session.lock().unwrap().feed(&records)).await??;
    json_body(
        StatusCode::OK,
        &FeedResponse {
            session_id: req.session_id,
            summary,
        },
    )
}

async fn incremental_snapshot(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: SessionRef = parse_json(&body)?;
    let session = state.session(&req.session_id)?;
    let response = blocking(move || session.lock().unwrap().snapshot()).await??;
    json_body(StatusCode::OK, &response)
}

async fn incremental_close(State(state): State<Arc<AppState>>, body: Bytes) -> ApiResult {
    let req: SessionRef = parse_json(&body)?;
    let session = state.session(&req.session_id)?;
    session.lock().unwrap().close();
    json_body(StatusCode::OK, &json!({ "session_id": req.session_id, "closed": true }))
}
