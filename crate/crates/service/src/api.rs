//! HTTP handlers and the response envelope.
//!
//! Every response body is `{"request_id", "ok", "data" | "error"}` and the
//! same id is echoed in the `x-request-id` header. The id is taken from the
//! request's `x-request-id` header when present.

use std::convert::Infallible;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, HeaderValue, StatusCode};
use axum::response::sse::{Event as SseEvent, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::Json;
use futures::stream::{self, Stream, StreamExt};
use semem_core::engine::EngineError;
use semem_core::nlparse::Strategy;
use semem_core::perception::{parse_scene_document, SceneDocError};
use semem_core::session::{Choice, PromptId, SessionError};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tokio::sync::{broadcast, oneshot};

use crate::actor::Command;
use crate::events::{CursorError, Event};
use crate::AppState;

pub const REQUEST_ID_HEADER: &str = "x-request-id";

#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: String,
    pub message: String,
    #[serde(skip_serializing_if = "Value::is_null")]
    pub details: Value,
}

impl ApiError {
    pub fn new(status: StatusCode, code: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            status,
            code: code.into(),
            message: message.into(),
            details: Value::Null,
        }
    }

    fn with_details(mut self, details: Value) -> Self {
        self.details = details;
        self
    }

    fn unavailable() -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, "unavailable", "engine is shutting down")
    }
}

fn bad_json(e: serde_json::Error) -> ApiError {
    ApiError::new(StatusCode::BAD_REQUEST, "malformed_body", e.to_string())
        .with_details(json!({"line": e.line(), "column": e.column()}))
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        let msg = e.to_string();
        match e {
            EngineError::DialogueBusy => ApiError::new(StatusCode::CONFLICT, "DialogueBusy", msg),
            EngineError::Parse(p) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, p.code(), msg),
            EngineError::Session(s) => match s {
                SessionError::UnknownPrompt(_) => ApiError::new(StatusCode::NOT_FOUND, "UnknownPrompt", msg),
                SessionError::PromptClosed(_) => ApiError::new(StatusCode::CONFLICT, "PromptClosed", msg),
                SessionError::ShapeMismatch { .. } => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "ShapeMismatch", msg),
                SessionError::InvalidChoice(_) => ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "InvalidChoice", msg),
                SessionError::Resolve(_) => ApiError::new(StatusCode::CONFLICT, "StaleProposal", msg),
                SessionError::DialogueBusy => ApiError::new(StatusCode::CONFLICT, "DialogueBusy", msg),
                SessionError::Graph(_) | SessionError::Perception(_) | SessionError::Skill(_) => {
                    ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "AnswerRejected", msg)
                }
            },
            EngineError::Exec(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "ExecutionError", msg),
            EngineError::Graph(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "GraphError", msg),
        }
    }
}

pub(crate) fn request_id(headers: &HeaderMap) -> String {
    headers
        .get(REQUEST_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .filter(|s| !s.is_empty() && s.len() <= 128)
        .map(str::to_string)
        .unwrap_or_else(|| uuid::Uuid::new_v4().to_string())
}

fn envelope<T: Serialize>(rid: &str, result: Result<T, ApiError>) -> Response {
    let (status, body) = match result {
        Ok(data) => (StatusCode::OK, json!({"request_id": rid, "ok": true, "data": data})),
        Err(e) => (e.status, json!({"request_id": rid, "ok": false, "error": e})),
    };
    let mut resp = (status, Json(body)).into_response();
    if let Ok(v) = HeaderValue::from_str(rid) {
        resp.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    resp
}

async fn call<T>(state: &AppState, make: impl FnOnce(oneshot::Sender<T>) -> Command) -> Result<T, ApiError> {
    let (tx, rx) = oneshot::channel();
    state.commands.send(make(tx)).await.map_err(|_| ApiError::unavailable())?;
    rx.await.map_err(|_| ApiError::unavailable())
}

pub(crate) async fn post_scene(State(state): State<AppState>, headers: HeaderMap, body: String) -> Response {
    let rid = request_id(&headers);
    let result = async {
        let obs = parse_scene_document(&body).map_err(|e| {
            let SceneDocError::Malformed {
                line,
                column,
                ref path,
                ..
            } = e;
            ApiError::new(StatusCode::BAD_REQUEST, "MalformedDocument", e.to_string())
                .with_details(json!({"line": line, "column": column, "path": path}))
        })?;
        call(&state, |tx| Command::Ingest(obs, tx)).await?.map_err(ApiError::from)
    }
    .await;
    envelope(&rid, result)
}

pub(crate) async fn reset_scene(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let rid = request_id(&headers);
    let result = call(&state, Command::ResetScene)
        .await
        .map(|removed| json!({"removed_nodes": removed}));
    envelope(&rid, result)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstructionBody {
    text: String,
    #[serde(default)]
    strategy: Option<Strategy>,
}

pub(crate) async fn post_instruction(State(state): State<AppState>, headers: HeaderMap, body: String) -> Response {
    let rid = request_id(&headers);
    let result = async {
        let req: InstructionBody = serde_json::from_str(&body).map_err(bad_json)?;
        call(&state, |reply| Command::Instruct {
            text: req.text,
            strategy: req.strategy,
            reply,
        })
        .await?
        .map_err(ApiError::from)
    }
    .await;
    envelope(&rid, result)
}

pub(crate) async fn post_answer(State(state): State<AppState>, headers: HeaderMap, Path(id): Path<u64>, body: String) -> Response {
    let rid = request_id(&headers);
    let result = async {
        let choice: Choice = serde_json::from_str(&body).map_err(bad_json)?;
        call(&state, |reply| Command::Answer {
            id: PromptId(id),
            choice,
            reply,
        })
        .await?
        .map_err(ApiError::from)
    }
    .await;
    envelope(&rid, result)
}

pub(crate) async fn get_prompts(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let rid = request_id(&headers);
    let snap = state.snapshot.borrow().clone();
    envelope::<Value>(&rid, Ok(json!({"open": snap.open_prompt, "prompts": snap.prompts})))
}

pub(crate) async fn get_graph(State(state): State<AppState>, headers: HeaderMap) -> Response {
    let rid = request_id(&headers);
    let snap = state.snapshot.borrow().clone();
    envelope::<Value>(
        &rid,
        Ok(json!({
            "version": snap.version,
            "event_seq": state.events.next_seq(),
            "invariant_violations": snap.invariant_violations,
            "graph": snap.graph,
        })),
    )
}

#[derive(Debug, Deserialize)]
pub(crate) struct LogQuery {
    #[serde(default)]
    from: usize,
}

pub(crate) async fn get_log(State(state): State<AppState>, headers: HeaderMap, Query(q): Query<LogQuery>) -> Response {
    let rid = request_id(&headers);
    let snap = state.snapshot.borrow().clone();
    let records: Vec<_> = snap.log.iter().skip(q.from).cloned().collect();
    envelope::<Value>(&rid, Ok(json!({"from": q.from, "total": snap.log.len(), "records": records})))
}

#[derive(Debug, Deserialize)]
pub(crate) struct EventsQuery {
    from: Option<u64>,
    #[serde(default = "yes")]
    follow: bool,
}

fn yes() -> bool {
    true
}

fn sse_event(e: &Event) -> SseEvent {
    SseEvent::default()
        .id(e.seq.to_string())
        .event(e.kind)
        .json_data(e)
        .expect("events serialize")
}

/// Server-sent events from a cursor. The cursor is `from`, or one past
/// the `Last-Event-ID` header, or 0.
pub(crate) async fn get_events(State(state): State<AppState>, headers: HeaderMap, Query(q): Query<EventsQuery>) -> Response {
    let rid = request_id(&headers);
    let last_id = headers
        .get("last-event-id")
        .and_then(|v| v.to_str().ok())
        .and_then(|s| s.parse::<u64>().ok());
    let from = q.from.or(last_id.map(|n| n + 1)).unwrap_or(0);
    let (history, rx) = match state.events.subscribe(from) {
        Ok(x) => x,
        Err(CursorError::Gone { oldest }) => {
            return envelope::<()>(
                &rid,
                Err(ApiError::new(
                    StatusCode::GONE,
                    "CursorExpired",
                    format!("events before {oldest} are no longer kept; refetch /graph"),
                )
                .with_details(json!({"oldest": oldest}))),
            )
        }
        Err(CursorError::Ahead { next }) => {
            return envelope::<()>(
                &rid,
                Err(ApiError::new(StatusCode::NOT_FOUND, "UnknownCursor", format!("cursor {from} is past the newest event"))
                    .with_details(json!({"next": next}))),
            )
        }
    };
    let replay = stream::iter(history.iter().map(sse_event).collect::<Vec<_>>());
    let body: std::pin::Pin<Box<dyn Stream<Item = Result<SseEvent, Infallible>> + Send>> = if q.follow {
        Box::pin(replay.chain(live(rx)).map(Ok))
    } else {
        Box::pin(replay.map(Ok))
    };
    let mut resp = Sse::new(body).keep_alive(KeepAlive::default()).into_response();
    if let Ok(v) = HeaderValue::from_str(&rid) {
        resp.headers_mut().insert(REQUEST_ID_HEADER, v);
    }
    resp
}

/// Live events until the subscriber falls behind the fan-out buffer; the
/// client then reconnects with its last seen id.
fn live(rx: broadcast::Receiver<Event>) -> impl Stream<Item = SseEvent> {
    stream::unfold(rx, |mut rx| async move {
        match rx.recv().await {
            Ok(e) => Some((sse_event(&e), rx)),
            Err(broadcast::error::RecvError::Lagged(n)) => {
                tracing::warn!(skipped = n, "event subscriber lagged; closing stream");
                None
            }
            Err(broadcast::error::RecvError::Closed) => None,
        }
    })
}

pub(crate) async fn not_found(headers: HeaderMap) -> Response {
    let rid = request_id(&headers);
    envelope::<()>(&rid, Err(ApiError::new(StatusCode::NOT_FOUND, "NotFound", "no such route")))
}
