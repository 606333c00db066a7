//! JSON API and debug-event stream for the editor.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::{Path, RawQuery, State};
use axum::http::{header, Method, StatusCode, Uri};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use futures::Stream;
use seismoflow_core::flow::{parse_flow, validate_flow, FlowError, Issue, Severity};
use seismoflow_core::palette::Palette;
use seismoflow_core::runtime::{
    DebugEvent, DeployOutcome, DeploymentStatus, Engine, EngineError, RuntimeEnv,
};
use serde::Serialize;
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;
use tokio_stream::StreamExt;

use crate::store::{valid_flow_id, FlowStore, FlowSummary, StoreError};

/// Events buffered per stream subscriber before the slowest one skips ahead.
const EVENT_BUFFER: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Malformed,
    ValidationFailed,
    NotFound,
    NotDeployed,
    Conflict,
}

/// The one error shape every endpoint answers with.
#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ApiError {
    pub http_status: u16,
    pub code: ErrorCode,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<Vec<Issue>>,
}

impl ApiError {
    fn new(status: StatusCode, code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError {
            http_status: status.as_u16(),
            code,
            message: message.into(),
            report: None,
        }
    }

    fn malformed(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, ErrorCode::Malformed, message)
    }

    fn validation(message: impl Into<String>, report: Vec<Issue>) -> Self {
        ApiError {
            report: Some(report),
            ..Self::new(StatusCode::UNPROCESSABLE_ENTITY, ErrorCode::ValidationFailed, message)
        }
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, ErrorCode::NotFound, message)
    }

    /// Failures on the server's side. None of the codes describes them well;
    /// `conflict` at least tells clients a retry may succeed.
    fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, ErrorCode::Conflict, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let status =
            StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
        (status, Json(self)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::BadId(_) | StoreError::NotFound(_) => ApiError::not_found(e.to_string()),
            StoreError::Corrupt { .. } => ApiError::malformed(e.to_string()),
            StoreError::Io(_) => ApiError::internal(e.to_string()),
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match &e {
            EngineError::Deploy(d) => ApiError::validation(
                e.to_string(),
                vec![Issue {
                    severity: Severity::Error,
                    node_id: d.node_id.clone(),
                    message: d.cause.clone(),
                }],
            ),
            EngineError::Conflict(_) => {
                ApiError::new(StatusCode::CONFLICT, ErrorCode::Conflict, e.to_string())
            }
            EngineError::NotDeployed(_) => {
                ApiError::new(StatusCode::CONFLICT, ErrorCode::NotDeployed, e.to_string())
            }
            EngineError::Runtime(_) => ApiError::malformed(e.to_string()),
            EngineError::Closed => ApiError::internal(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Shared by every handler.
pub struct AppState {
    pub engine: Arc<Engine>,
    pub store: FlowStore,
    pub palette: Arc<Palette>,
    events: broadcast::Sender<DebugEvent>,
}

impl AppState {
    /// Starts an engine over `env` and fans its events out to stream clients.
    pub fn new(palette: Arc<Palette>, env: RuntimeEnv, store: FlowStore) -> Arc<Self> {
        let engine = Arc::new(Engine::start(palette.clone(), env));
        let (events, _) = broadcast::channel(EVENT_BUFFER);
        let tx = events.clone();
        engine.subscribe_events(Arc::new(move |e: &DebugEvent| {
            let _ = tx.send(e.clone());
        }));
        Arc::new(AppState {
            engine,
            store,
            palette,
            events,
        })
    }

    /// Receives every debug event from now on.
    pub fn subscribe(&self) -> broadcast::Receiver<DebugEvent> {
        self.events.subscribe()
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct DeployResponse {
    pub outcome: DeployOutcome,
    pub status: DeploymentStatus,
}

#[derive(Debug, Clone, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StopResponse {
    pub flow_id: String,
    pub drained: usize,
    pub discarded: usize,
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/api/palette", get(palette))
        .route("/api/flows", get(list_flows))
        .route("/api/flows/:id", get(get_flow).put(put_flow))
        .route(
            "/api/flows/:id/deploy",
            get(deploy_status).post(deploy).delete(stop),
        )
        .route("/api/events", get(events))
        .fallback(no_route)
        .method_not_allowed_fallback(no_method)
        .with_state(state)
}

async fn no_route(uri: Uri) -> ApiError {
    ApiError::not_found(format!("no endpoint at {}", uri.path()))
}

async fn no_method(method: Method, uri: Uri) -> ApiError {
    ApiError {
        http_status: StatusCode::METHOD_NOT_ALLOWED.as_u16(),
        ..ApiError::not_found(format!("{method} is not supported on {}", uri.path()))
    }
}

/// Runs blocking store or engine work off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
}

async fn palette(State(s): State<Arc<AppState>>) -> impl IntoResponse {
    Json(s.palette.descriptors().to_vec())
}

async fn list_flows(State(s): State<Arc<AppState>>) -> ApiResult<Json<Vec<FlowSummary>>> {
    blocking(move || Ok(Json(s.store.list()?))).await
}

async fn get_flow(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Response> {
    let doc = blocking(move || Ok(s.store.document(&id)?)).await?;
    Ok(([(header::CONTENT_TYPE, "application/json")], doc).into_response())
}

fn structure_issue(e: &FlowError) -> Option<Issue> {
    let node = match e {
        FlowError::DanglingWire { from, .. } | FlowError::BadPort { from, .. } => from.clone(),
        FlowError::DuplicateNodeId(id) => id.clone(),
        _ => return None,
    };
    Some(Issue {
        severity: Severity::Error,
        node_id: Some(node),
        message: e.to_string(),
    })
}

async fn put_flow(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Result<Bytes, BytesRejection>,
) -> ApiResult<Json<FlowSummary>> {
    let body = body.map_err(|e| ApiError {
        http_status: e.status().as_u16(),
        ..ApiError::malformed(e.body_text())
    })?;
    if !valid_flow_id(&id) {
        return Err(ApiError::not_found(format!("\"{id}\" is not a usable flow id")));
    }
    let text = std::str::from_utf8(&body)
        .map_err(|e| ApiError::malformed(format!("body is not UTF-8: {e}")))?;
    let graph = parse_flow(text).map_err(|e| match structure_issue(&e) {
        Some(issue) => ApiError::validation("flow failed validation", vec![issue]),
        None => ApiError::malformed(e.to_string()),
    })?;
    if graph.id != id {
        return Err(ApiError::malformed(format!(
            "document id \"{}\" does not match \"{id}\"",
            graph.id
        )));
    }
    let report = validate_flow(&graph, &s.palette);
    if !report.is_empty() {
        return Err(ApiError::validation("flow failed validation", report));
    }
    blocking(move || {
        s.store.save(&graph)?;
        Ok(Json(FlowSummary::of(&graph)))
    })
    .await
}

fn force_flag(query: Option<&str>) -> ApiResult<bool> {
    let mut force = false;
    for pair in query.unwrap_or("").split('&').filter(|p| !p.is_empty()) {
        let (key, value) = pair.split_once('=').unwrap_or((pair, ""));
        if key != "force" {
            continue;
        }
        force = match value {
            "" | "true" | "1" => true,
            "false" | "0" => false,
            other => return Err(ApiError::malformed(format!("force must be true or false, not \"{other}\""))),
        };
    }
    Ok(force)
}

async fn deploy(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
    RawQuery(query): RawQuery,
) -> ApiResult<Json<DeployResponse>> {
    let force = force_flag(query.as_deref())?;
    blocking(move || {
        let graph = s.store.load(&id)?;
        let report = validate_flow(&graph, &s.palette);
        if !report.is_empty() {
            return Err(ApiError::validation("stored flow failed validation", report));
        }
        let outcome = s.engine.deploy(graph, force)?;
        let status = s
            .engine
            .status(&id)
            .ok_or_else(|| ApiError::internal("deployment vanished"))?;
        Ok(Json(DeployResponse { outcome, status }))
    })
    .await
}

async fn deploy_status(
    State(s): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> ApiResult<Json<DeploymentStatus>> {
    blocking(move || {
        s.engine.status(&id).map(Json).ok_or_else(|| ApiError {
            http_status: StatusCode::NOT_FOUND.as_u16(),
            ..ApiError::from(EngineError::NotDeployed(id))
        })
    })
    .await
}

async fn stop(State(s): State<Arc<AppState>>, Path(id): Path<String>) -> ApiResult<Json<StopResponse>> {
    blocking(move || {
        let r = s.engine.stop(&id)?;
        Ok(Json(StopResponse {
            flow_id: id,
            drained: r.drained,
            discarded: r.discarded,
        }))
    })
    .await
}

async fn events(
    State(s): State<Arc<AppState>>,
) -> Sse<impl Stream<Item = Result<Event, Infallible>>> {
    let stream = BroadcastStream::new(s.subscribe()).filter_map(|e| {
        // Lagging clients skip what they missed.
        let e = e.ok()?;
        let data = serde_json::to_string(&e).ok()?;
        Some(Ok(Event::default().id(e.seq.to_string()).data(data)))
    });
    Sse::new(stream).keep_alive(KeepAlive::default())
}
