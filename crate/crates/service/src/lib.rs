//! HTTP + server-sent-events API over a live [`Engine`].
//!
//! | route | purpose |
//! |---|---|
//! | `POST /scene` | ingest a scene document |
//! | `POST /scene/reset` | drop the scene subgraph |
//! | `POST /instruction` | `{text, strategy?}`: parse, resolve, execute or ask |
//! | `POST /prompt/{id}/answer` | answer an open prompt |
//! | `GET /prompts` | prompt history and the open prompt |
//! | `GET /graph` | full graph snapshot, scene included |
//! | `GET /events?from=N&follow=bool` | event stream from a cursor |
//! | `GET /log?from=N` | execution records |
//!
//! All writes go through one actor task that owns the engine; reads are
//! served from the snapshot it publishes after every command.

mod actor;
pub mod api;
pub mod events;

use std::sync::Arc;
use std::time::Duration;

use axum::routing::{get, post};
use axum::Router;
use semem_core::engine::Engine;
use tokio::net::TcpListener;
use tokio::sync::{mpsc, watch};

pub use actor::Snapshot;
pub use api::ApiError;
pub use events::{Event, EventLog, DEFAULT_HISTORY};

use actor::{snapshot_of, Actor, Command};

/// Idle time after which an unanswered prompt expires.
pub const DEFAULT_PROMPT_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub event_history: usize,
    /// Re-check graph invariants after every command.
    pub check_invariants: bool,
    /// How often the actor looks for expired prompts.
    pub expiry_poll: Duration,
    pub command_queue: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            event_history: DEFAULT_HISTORY,
            check_invariants: true,
            expiry_poll: Duration::from_secs(1),
            command_queue: 256,
        }
    }
}

#[derive(Clone)]
pub struct AppState {
    commands: mpsc::Sender<Command>,
    events: Arc<EventLog>,
    snapshot: watch::Receiver<Arc<Snapshot>>,
}

impl AppState {
    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot.borrow().clone()
    }

    pub fn events(&self) -> &EventLog {
        &self.events
    }
}

/// Starts the engine actor on the current tokio runtime.
pub fn spawn(engine: Engine, config: ServiceConfig) -> AppState {
    let (tx, rx) = mpsc::channel(config.command_queue.max(1));
    let events = Arc::new(EventLog::new(config.event_history));
    let (snap_tx, snap_rx) = watch::channel(Arc::new(snapshot_of(&engine, 0, 0)));
    let actor = Actor {
        engine,
        events: events.clone(),
        snapshot: snap_tx,
        check_invariants: config.check_invariants,
        violations: 0,
        version: 0,
    };
    tokio::spawn(actor.run(rx, config.expiry_poll));
    AppState {
        commands: tx,
        events,
        snapshot: snap_rx,
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/scene", post(api::post_scene))
        .route("/scene/reset", post(api::reset_scene))
        .route("/instruction", post(api::post_instruction))
        .route("/prompt/{id}/answer", post(api::post_answer))
        .route("/prompts", get(api::get_prompts))
        .route("/graph", get(api::get_graph))
        .route("/events", get(api::get_events))
        .route("/log", get(api::get_log))
        .fallback(api::not_found)
        .with_state(state)
}

pub async fn serve(listener: TcpListener, state: AppState) -> std::io::Result<()> {
    tracing::info!(addr = ?listener.local_addr().ok(), "serving");
    axum::serve(listener, router(state)).await
}
