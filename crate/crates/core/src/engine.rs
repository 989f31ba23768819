//! The whole pipeline behind one `&mut` handle: ingest scenes, take
//! instructions, settle dialogue, execute plans, and record what happened as
//! a stream of [`EngineEvent`]s.
//!
//! The engine is single-writer by construction. The service wraps it in an
//! actor task; the CLI drives it directly.

use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ExecError, ExecutionRecord, Executor, ExecutorConfig, Step};
use crate::graph::{GraphError, NodeId};
use crate::nlparse::{IntentFrame, ParseError, Parser, Strategy};
use crate::perception::{apply_ingest, plan_ingest, Disposition, IngestReport, Observation};
use crate::resolver::{resolve, ResolutionOutcome};
use crate::session::{nearest_of, teach_skill, Choice, Effect, FollowUp, Prompt, PromptId, PromptState, Session, SessionConfig, SessionError};
use crate::world::World;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClockMode {
    /// A counter bumped on every engine call; replays are bit-stable.
    #[default]
    Logical,
    /// Milliseconds since the Unix epoch.
    Wall,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct EngineConfig {
    pub strategy: Strategy,
    pub session: SessionConfig,
    pub executor: ExecutorConfig,
    pub clock: ClockMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EngineEvent {
    GraphChanged { reason: String },
    PromptOpened { prompt: Prompt },
    PromptClosed { prompt_id: PromptId, state: PromptState },
    ExecutionRecorded { record: ExecutionRecord },
    SceneIngested { report: IngestReport },
}

impl EngineEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            EngineEvent::GraphChanged { .. } => "graph_changed",
            EngineEvent::PromptOpened { .. } => "prompt_opened",
            EngineEvent::PromptClosed { .. } => "prompt_closed",
            EngineEvent::ExecutionRecorded { .. } => "execution_recorded",
            EngineEvent::SceneIngested { .. } => "scene_ingested",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("a prompt is already open; answer it first")]
    DialogueBusy,
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Session(SessionError),
    #[error(transparent)]
    Exec(#[from] ExecError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl From<SessionError> for EngineError {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::DialogueBusy => EngineError::DialogueBusy,
            e => EngineError::Session(e),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub report: IngestReport,
    pub prompt: Option<Prompt>,
}

/// Result of resolving (and possibly executing) an intent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grounding {
    pub resolution: ResolutionOutcome,
    pub execution: Option<ExecutionRecord>,
    pub prompt: Option<Prompt>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstructionOutcome {
    pub frame: IntentFrame,
    #[serde(flatten)]
    pub grounding: Grounding,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOutcome {
    pub prompt: Prompt,
    pub effects: Vec<Effect>,
    /// Set when the answer led to another resolution attempt or a final
    /// outcome.
    pub grounding: Option<Grounding>,
    /// Next queued prompt opened after this one closed.
    pub next_prompt: Option<Prompt>,
}

pub struct Engine {
    world: World,
    parser: Parser,
    session: Session,
    executor: Executor,
    config: EngineConfig,
    log: Vec<ExecutionRecord>,
    outbox: Vec<EngineEvent>,
    tick: u64,
}

impl Engine {
    pub fn new(world: World, parser: Parser, config: EngineConfig) -> Self {
        Self {
            world,
            parser,
            session: Session::new(config.session),
            executor: Executor::new(config.executor.clone()),
            config,
            log: Vec::new(),
            outbox: Vec::new(),
            tick: 0,
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn session(&self) -> &Session {
        &self.session
    }

    pub fn parser(&self) -> &Parser {
        &self.parser
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn set_strategy(&mut self, strategy: Strategy) {
        self.config.strategy = strategy;
    }

    pub fn set_fail_step(&mut self, step: Option<usize>) {
        self.executor.set_fail_step(step);
    }

    pub fn open_prompt(&self) -> Option<&Prompt> {
        self.session.open_prompt()
    }

    /// Every execution so far, oldest first.
    pub fn execution_log(&self) -> &[ExecutionRecord] {
        &self.log
    }

    /// Takes the events produced since the last call.
    pub fn drain_events(&mut self) -> Vec<EngineEvent> {
        std::mem::take(&mut self.outbox)
    }

    fn now(&mut self) -> u64 {
        match self.config.clock {
            ClockMode::Logical => {
                self.tick += 1;
                self.tick
            }
            ClockMode::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0),
        }
    }

    /// Expires a stale prompt, then returns the current time.
    fn begin(&mut self) -> u64 {
        let now = self.now();
        if let Some(id) = self.session.expire(now) {
            self.outbox.push(EngineEvent::PromptClosed {
                prompt_id: id,
                state: PromptState::Expired,
            });
        }
        now
    }

    /// Expires the open prompt if its idle timeout has passed. Returns
    /// whether anything changed.
    pub fn expire_idle(&mut self) -> bool {
        let before = self.outbox.len();
        self.begin();
        self.outbox.len() != before
    }

    fn opened(&mut self, prompt: &Option<Prompt>) {
        if let Some(p) = prompt {
            self.outbox.push(EngineEvent::PromptOpened { prompt: p.clone() });
        }
    }

    /// Classifies and instantiates a scene. Unknown objects queue for
    /// labelling; the first opens a prompt. Refused with `DialogueBusy` if
    /// the scene has unknowns while another prompt is open.
    pub fn ingest(&mut self, observations: &[Observation]) -> Result<IngestOutcome, EngineError> {
        let now = self.begin();
        let plan = plan_ingest(&self.world.signatures, observations);
        let has_unknowns = plan.iter().any(|d| matches!(d, Disposition::Unknown(_)));
        if has_unknowns && self.session.open_prompt().is_some() {
            return Err(EngineError::DialogueBusy);
        }
        let mut graph = self.world.graph.clone();
        let report = apply_ingest(&mut graph, observations, &plan)?;
        self.world.graph = graph;

        let mut first = None;
        for (obs, d) in observations.iter().zip(&plan) {
            if let Disposition::Unknown(c) = d {
                if first.is_none() {
                    first = Some(self.session.raise_unknown_object(obs.clone(), nearest_of(c), now)?);
                } else {
                    self.session.queue_unknown(obs.clone());
                }
            }
        }
        self.outbox.push(EngineEvent::SceneIngested { report: report.clone() });
        if !report.instantiated.is_empty() {
            self.outbox.push(EngineEvent::GraphChanged {
                reason: "scene ingested".into(),
            });
        }
        self.opened(&first);
        Ok(IngestOutcome { report, prompt: first })
    }

    /// Drops every scene instance and any queued unknowns. Counters keep
    /// counting.
    pub fn reset_scene(&mut self) -> usize {
        self.begin();
        self.session.clear_pending();
        let removed = self.world.graph.clear_scene();
        self.outbox.push(EngineEvent::GraphChanged {
            reason: "scene reset".into(),
        });
        removed
    }

    pub fn parse(&self, text: &str, strategy: Option<Strategy>) -> Result<IntentFrame, ParseError> {
        self.parser.parse(text, strategy.unwrap_or(self.config.strategy))
    }

    /// Parse, resolve, and either execute or open a prompt.
    pub fn instruct(&mut self, text: &str, strategy: Option<Strategy>) -> Result<InstructionOutcome, EngineError> {
        let now = self.begin();
        let frame = self.parse(text, strategy)?;
        let grounding = self.ground(&frame, now)?;
        Ok(InstructionOutcome { frame, grounding })
    }

    fn ground(&mut self, frame: &IntentFrame, now: u64) -> Result<Grounding, EngineError> {
        let resolution = resolve(&self.world.graph, frame);
        let mut grounding = Grounding {
            resolution,
            execution: None,
            prompt: None,
        };
        match &grounding.resolution {
            ResolutionOutcome::Resolved { plan } => {
                let plan = plan.clone();
                grounding.execution = Some(self.run(&plan)?);
            }
            outcome => {
                if self.session.open_prompt().is_some()
                    && matches!(
                        outcome,
                        ResolutionOutcome::NeedsObjectConfirmation { .. } | ResolutionOutcome::NeedsActionConfirmation { .. }
                    )
                {
                    return Err(EngineError::DialogueBusy);
                }
                grounding.prompt = self.session.raise_for_outcome(outcome, now)?;
                self.opened(&grounding.prompt);
            }
        }
        Ok(grounding)
    }

    fn run(&mut self, plan: &crate::resolver::ResolvedPlan) -> Result<ExecutionRecord, EngineError> {
        let mut graph = self.world.graph.clone();
        let record = self.executor.execute(&mut graph, &self.world.skills, plan)?;
        self.world.graph = graph;
        self.log.push(record.clone());
        self.outbox.push(EngineEvent::ExecutionRecorded { record: record.clone() });
        if !record.scene_delta.removed.is_empty() || !record.scene_delta.moved.is_empty() {
            self.outbox.push(EngineEvent::GraphChanged {
                reason: format!("executed {}", plan.skill_ref),
            });
        }
        Ok(record)
    }

    /// Applies an answer and carries on with whatever it unblocks.
    pub fn answer(&mut self, id: PromptId, choice: Choice) -> Result<AnswerOutcome, EngineError> {
        let now = self.begin();
        let answered = self.session.answer(&mut self.world, id, choice)?;
        self.outbox.push(EngineEvent::PromptClosed {
            prompt_id: id,
            state: PromptState::Answered,
        });
        if answered.effects.iter().any(Effect::touches_graph) {
            self.outbox.push(EngineEvent::GraphChanged {
                reason: format!("answered prompt {id}"),
            });
        }
        let grounding = match answered.follow_up {
            FollowUp::None => None,
            FollowUp::Execute { plan } => Some(Grounding {
                resolution: ResolutionOutcome::Resolved { plan: plan.clone() },
                execution: Some(self.run(&plan)?),
                prompt: None,
            }),
            FollowUp::Reresolve { frame } => Some(self.ground(&frame, now)?),
            FollowUp::Outcome { outcome } => Some(Grounding {
                resolution: outcome,
                execution: None,
                prompt: None,
            }),
        };
        let next_prompt = self.session.raise_pending(now);
        self.opened(&next_prompt);
        Ok(AnswerOutcome {
            prompt: answered.prompt,
            effects: answered.effects,
            grounding,
            next_prompt,
        })
    }

    /// Records a skill outside any dialogue.
    pub fn teach_skill(&mut self, name: &str, steps: Vec<Step>) -> Result<(), EngineError> {
        self.begin();
        teach_skill(&mut self.world.skills, name, steps)?;
        Ok(())
    }

    /// Scene instance by label, for callers that think in labels.
    pub fn scene_node(&self, label: &str) -> Option<NodeId> {
        self.world.graph.scene_node(label)
    }
}
