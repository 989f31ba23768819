//! The single writer: one task owns the engine and applies commands in
//! arrival order. After every command it publishes the new events and a
//! fresh read snapshot.

use std::sync::Arc;
use std::time::Duration;

use semem_core::engine::{AnswerOutcome, Engine, EngineError, IngestOutcome, InstructionOutcome};
use semem_core::executor::ExecutionRecord;
use semem_core::nlparse::Strategy;
use semem_core::perception::Observation;
use semem_core::persistence::GraphDocument;
use semem_core::session::{Choice, Prompt, PromptId};
use serde::Serialize;
use tokio::sync::{mpsc, oneshot, watch};

use crate::events::EventLog;

pub(crate) type Reply<T> = oneshot::Sender<T>;

pub(crate) enum Command {
    Ingest(Vec<Observation>, Reply<Result<IngestOutcome, EngineError>>),
    ResetScene(Reply<usize>),
    Instruct {
        text: String,
        strategy: Option<Strategy>,
        reply: Reply<Result<InstructionOutcome, EngineError>>,
    },
    Answer {
        id: PromptId,
        choice: Choice,
        reply: Reply<Result<AnswerOutcome, EngineError>>,
    },
}

/// Read-only view published after every command.
#[derive(Debug, Clone, Serialize)]
pub struct Snapshot {
    pub graph: GraphDocument,
    pub prompts: Vec<Prompt>,
    pub open_prompt: Option<PromptId>,
    pub log: Vec<ExecutionRecord>,
    /// Commands after which the graph failed its invariant check.
    pub invariant_violations: u64,
    /// Number of commands applied so far.
    pub version: u64,
}

pub(crate) struct Actor {
    pub engine: Engine,
    pub events: Arc<EventLog>,
    pub snapshot: watch::Sender<Arc<Snapshot>>,
    pub check_invariants: bool,
    pub violations: u64,
    pub version: u64,
}

pub(crate) fn snapshot_of(engine: &Engine, violations: u64, version: u64) -> Snapshot {
    Snapshot {
        graph: GraphDocument::from_world(engine.world(), true),
        prompts: engine.session().prompts().to_vec(),
        open_prompt: engine.open_prompt().map(|p| p.id),
        log: engine.execution_log().to_vec(),
        invariant_violations: violations,
        version,
    }
}

impl Actor {
    fn publish(&mut self) {
        self.version += 1;
        if self.check_invariants {
            if let Err(v) = self.engine.world().graph.check_invariants() {
                self.violations += 1;
                tracing::error!(%v, "graph invariant violated");
            }
        }
        self.events.append(self.engine.drain_events());
        let snap = snapshot_of(&self.engine, self.violations, self.version);
        self.snapshot.send_replace(Arc::new(snap));
    }

    fn apply(&mut self, cmd: Command) {
        // a dropped reply channel only means the client went away
        match cmd {
            Command::Ingest(obs, reply) => {
                let r = self.engine.ingest(&obs);
                self.publish();
                let _ = reply.send(r);
            }
            Command::ResetScene(reply) => {
                let n = self.engine.reset_scene();
                self.publish();
                let _ = reply.send(n);
            }
            Command::Instruct { text, strategy, reply } => {
                let r = self.engine.instruct(&text, strategy);
                self.publish();
                let _ = reply.send(r);
            }
            Command::Answer { id, choice, reply } => {
                let r = self.engine.answer(id, choice);
                self.publish();
                let _ = reply.send(r);
            }
        }
    }

    pub async fn run(mut self, mut rx: mpsc::Receiver<Command>, expiry_poll: Duration) {
        let mut poll = tokio::time::interval(expiry_poll);
        poll.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
        loop {
            tokio::select! {
                cmd = rx.recv() => match cmd {
                    Some(cmd) => self.apply(cmd),
                    None => break,
                },
                _ = poll.tick() => {
                    if self.engine.expire_idle() {
                        self.publish();
                    }
                }
            }
        }
        tracing::debug!("engine actor stopped");
    }
}
