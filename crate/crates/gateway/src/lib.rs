//! HTTP access to a [`Platform`]: chat, jobs, approvals, traces, a live
//! event stream and the MCP mount.
//!
//! Every route except `GET /api/health` requires `Authorization: Bearer
//! <token>`. Platform calls are synchronous and run on the blocking pool.

use std::convert::Infallible;
use std::sync::Arc;

use axum::body::{Body, Bytes};
use axum::extract::{DefaultBodyLimit, Path, Query, Request, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::StreamExt;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::sync::broadcast;
use tokio_stream::wrappers::BroadcastStream;

use tippy_core::job_engine::{query_jobs, JobFilter};
use tippy_core::lab_model::{ApprovalState, JobState};
use tippy_core::observability::build_tree;
use tippy_core::platform::{BusEvent, Platform, PlatformError};

/// Largest accepted request body.
pub const MAX_BODY_BYTES: usize = 64 * 1024;
const EVENT_BUFFER: usize = 1024;

#[derive(Clone)]
pub struct AppState {
    pub platform: Arc<Platform>,
    token: Arc<str>,
    events: broadcast::Sender<BusEvent>,
}

impl AppState {
    /// Subscribes the broadcast channel to the platform's event bus.
    pub fn new(platform: Arc<Platform>, token: &str) -> Self {
        let (tx, _) = broadcast::channel(EVENT_BUFFER);
        let sender = tx.clone();
        platform.bus().subscribe(Box::new(move |e| {
            // No subscribers is not an error.
            let _ = sender.send(e.clone());
        }));
        Self {
            platform,
            token: token.into(),
            events: tx,
        }
    }
}

pub struct ApiError(StatusCode, String);

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({ "error": self.1 }))).into_response()
    }
}

impl From<PlatformError> for ApiError {
    fn from(e: PlatformError) -> Self {
        let status = match &e {
            PlatformError::Busy(_) | PlatformError::Conflict(_) => StatusCode::CONFLICT,
            PlatformError::EmptyText | PlatformError::UnknownUser(_) => {
                StatusCode::UNPROCESSABLE_ENTITY
            }
            PlatformError::Forbidden { .. } => StatusCode::FORBIDDEN,
            PlatformError::NotFound(_) => StatusCode::NOT_FOUND,
            PlatformError::Job(_) => StatusCode::BAD_REQUEST,
            PlatformError::Turn(_) | PlatformError::Storage(_) | PlatformError::Startup(_) => {
                StatusCode::INTERNAL_SERVER_ERROR
            }
        };
        ApiError(status, e.to_string())
    }
}

fn bad_request(msg: impl Into<String>) -> ApiError {
    ApiError(StatusCode::BAD_REQUEST, msg.into())
}

fn parse_json<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| {
        ApiError(
            StatusCode::UNPROCESSABLE_ENTITY,
            format!("invalid body: {e}"),
        )
    })
}

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> T + Send + 'static,
) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))
}

async fn require_token(
    State(state): State<AppState>,
    headers: HeaderMap,
    req: Request,
    next: Next,
) -> Response {
    let ok = headers
        .get(header::AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == &*state.token);
    if ok {
        next.run(req).await
    } else {
        ApiError(
            StatusCode::UNAUTHORIZED,
            "missing or invalid bearer token".into(),
        )
        .into_response()
    }
}

pub fn router(state: AppState) -> Router {
    let protected = Router::new()
        .route("/api/chat", post(post_chat))
        .route("/api/jobs", get(list_jobs))
        .route("/api/jobs/{id}", get(get_job))
        .route("/api/labs", get(list_labs))
        .route("/api/documents/{id}", get(get_document))
        .route("/api/conversations/{id}", get(get_conversation))
        .route("/api/traces/{conversation_id}", get(get_trace))
        .route("/api/approvals", get(list_approvals))
        .route("/api/approvals/{id}", post(resolve_approval))
        .route("/api/events", get(stream_events))
        .route("/api/clock/tick", post(tick))
        .route("/mcp", post(mcp))
        .route_layer(middleware::from_fn_with_state(state.clone(), require_token));
    Router::new()
        .route("/api/health", get(health))
        .merge(protected)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

/// An MCP-only server for one tool server, used by `mcp-serve`.
pub fn mcp_router(server: Arc<tippy_core::mcp::server::McpServer>) -> Router {
    Router::new()
        .route(
            "/mcp",
            post(|State(server): State<Arc<tippy_core::mcp::server::McpServer>>, body: Bytes| async move {
                mcp_reply(server.handle_message(&body))
            }),
        )
        .layer(DefaultBodyLimit::max(tippy_core::mcp::stdio::MAX_FRAME_BYTES))
        .with_state(server)
}

async fn health(State(state): State<AppState>) -> Json<Value> {
    Json(json!({ "status": "ok", "now_s": state.platform.now_s() }))
}

#[derive(Deserialize)]
struct ChatBody {
    #[serde(default)]
    conversation_id: Option<String>,
    user_id: String,
    text: String,
}

async fn post_chat(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let body: ChatBody = parse_json(&body)?;
    if body.text.trim().is_empty() {
        return Err(PlatformError::EmptyText.into());
    }
    let p = state.platform.clone();
    let resp = blocking(move || p.chat(body.conversation_id.as_deref(), &body.user_id, &body.text))
        .await??;
    Ok(Json(resp).into_response())
}

#[derive(Deserialize)]
struct JobQuery {
    lab_id: Option<String>,
    workflow_id: Option<String>,
    state: Option<String>,
    created_after: Option<f64>,
    created_before: Option<f64>,
    limit: Option<usize>,
}

async fn list_jobs(
    State(state): State<AppState>,
    Query(q): Query<JobQuery>,
) -> Result<Json<Value>, ApiError> {
    let job_state = match q.state.as_deref() {
        Some(s) => Some(
            JobState::parse(s).ok_or_else(|| bad_request(format!("unknown job state '{s}'")))?,
        ),
        None => None,
    };
    let filter = JobFilter {
        lab_id: q.lab_id,
        workflow_id: q.workflow_id,
        state: job_state,
        created_after: q.created_after,
        created_before: q.created_before,
        limit: q.limit,
    };
    let jobs = state
        .platform
        .engine()
        .read(|e| query_jobs(e.world(), &filter));
    Ok(Json(json!(jobs)))
}

async fn get_job(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let job = state
        .platform
        .engine()
        .read(|e| e.world().job(&id).cloned())
        .map_err(|e| ApiError(StatusCode::NOT_FOUND, e.to_string()))?;
    Ok(Json(json!(job)))
}

async fn list_labs(State(state): State<AppState>) -> Json<Value> {
    Json(
        state
            .platform
            .engine()
            .read(|e| json!(e.world().labs.values().collect::<Vec<_>>())),
    )
}

async fn get_document(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Response, ApiError> {
    let doc = state
        .platform
        .engine()
        .read(|e| e.world().document(&id).cloned())
        .map_err(|e| ApiError(StatusCode::NOT_FOUND, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, doc.mime.clone())], doc.bytes).into_response())
}

async fn get_conversation(
    State(state): State<AppState>,
    Path(id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let conv = state.platform.conversation(&id).ok_or_else(|| {
        ApiError(
            StatusCode::NOT_FOUND,
            format!("conversation {id} not found"),
        )
    })?;
    Ok(Json(json!(conv)))
}

async fn get_trace(
    State(state): State<AppState>,
    Path(conversation_id): Path<String>,
) -> Result<Json<Value>, ApiError> {
    let spans = state.platform.tracer().spans(&conversation_id);
    if spans.is_empty() && state.platform.conversation(&conversation_id).is_none() {
        return Err(ApiError(
            StatusCode::NOT_FOUND,
            format!("conversation {conversation_id} not found"),
        ));
    }
    Ok(Json(
        json!({ "conversation_id": conversation_id, "spans": build_tree(&spans) }),
    ))
}

#[derive(Deserialize)]
struct ApprovalQuery {
    state: Option<String>,
}

fn parse_approval_state(s: &str) -> Option<ApprovalState> {
    serde_json::from_value(json!(s)).ok()
}

async fn list_approvals(
    State(state): State<AppState>,
    Query(q): Query<ApprovalQuery>,
) -> Result<Json<Value>, ApiError> {
    let filter = match q.state.as_deref() {
        Some(s) => Some(
            parse_approval_state(s)
                .ok_or_else(|| bad_request(format!("unknown approval state '{s}'")))?,
        ),
        None => None,
    };
    Ok(Json(json!(state.platform.approvals(filter))))
}

#[derive(Deserialize)]
struct ResolveBody {
    decision: String,
    user_id: String,
}

async fn resolve_approval(
    State(state): State<AppState>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<Value>, ApiError> {
    let body: ResolveBody = parse_json(&body)?;
    let approve = match body.decision.as_str() {
        "approve" => true,
        "deny" => false,
        other => {
            return Err(ApiError(
                StatusCode::UNPROCESSABLE_ENTITY,
                format!("decision must be approve or deny, got '{other}'"),
            ))
        }
    };
    let p = state.platform.clone();
    let res = blocking(move || p.resolve_approval(&id, approve, &body.user_id)).await??;
    Ok(Json(json!(res)))
}

#[derive(Deserialize)]
struct TickBody {
    dt_s: f64,
}

async fn tick(State(state): State<AppState>, body: Bytes) -> Result<Json<Value>, ApiError> {
    let body: TickBody = parse_json(&body)?;
    let p = state.platform.clone();
    let events = blocking(move || p.tick(body.dt_s)).await??;
    Ok(Json(
        json!({ "now_s": state.platform.now_s(), "events": events }),
    ))
}

#[derive(Deserialize)]
struct EventQuery {
    /// Comma-separated event names to keep.
    kind: Option<String>,
    job_id: Option<String>,
}

/// One `text/event-stream` record: `event:` and `data:` lines and a blank
/// line. The data is compact JSON and therefore a single line.
pub fn sse_frame(e: &BusEvent) -> String {
    format!("event: {}\ndata: {}\n\n", e.event, e.data)
}

async fn stream_events(State(state): State<AppState>, Query(q): Query<EventQuery>) -> Response {
    let kinds: Option<Vec<String>> = q
        .kind
        .map(|k| k.split(',').map(|s| s.trim().to_string()).collect());
    let job_id = q.job_id;
    let stream = BroadcastStream::new(state.events.subscribe()).filter_map(move |item| {
        let keep = match &item {
            Ok(e) => {
                kinds.as_ref().is_none_or(|k| k.contains(&e.event))
                    && job_id.as_ref().is_none_or(|j| {
                        e.json().get("job_id").and_then(Value::as_str) == Some(j.as_str())
                    })
            }
            Err(_) => false,
        };
        let frame = item
            .ok()
            .filter(|_| keep)
            .map(|e| Ok::<_, Infallible>(Bytes::from(sse_frame(&e))));
        async move { frame }
    });
    // An opening comment flushes headers so clients know the stream is live.
    let opening = futures::stream::once(async {
        Ok::<_, Infallible>(Bytes::from_static(b": stream open\n\n"))
    });
    Response::builder()
        .header(header::CONTENT_TYPE, "text/event-stream")
        .header(header::CACHE_CONTROL, "no-cache")
        .body(Body::from_stream(opening.chain(stream)))
        .expect("static headers are valid")
}

fn mcp_reply(reply: Option<Vec<u8>>) -> Response {
    match reply {
        Some(bytes) => ([(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
        None => StatusCode::ACCEPTED.into_response(),
    }
}

async fn mcp(State(state): State<AppState>, body: Bytes) -> Result<Response, ApiError> {
    let server = state.platform.main_server().clone();
    let reply = blocking(move || server.handle_message(&body)).await?;
    Ok(mcp_reply(reply))
}
