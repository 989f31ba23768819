//! Operator dialogue.
//!
//! The session holds a strictly sequential list of prompts: at most one is
//! open at a time, ids only grow, and answered or expired prompts never
//! change again. Answering a prompt applies its effects to a copy of the
//! [`World`] and swaps the copy in only if every effect succeeded, so a
//! failed answer leaves graph, signatures and skills untouched.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{ExecError, Skill, SkillRegistry, Step};
use crate::graph::{GraphError, NearMiss, NodeId, PropertyValue};
use crate::nlparse::IntentFrame;
use crate::perception::{instantiate_observation, Classification, Observation, PerceptionError};
use crate::resolver::{confirm_object, ResolutionOutcome, ResolveError, ResolvedPlan};
use crate::world::World;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptId(pub u64);

impl std::fmt::Display for PromptId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "#{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptKind {
    ConfirmObject,
    ChooseAction,
    LabelUnknownObject,
    TeachSkill,
}

impl PromptKind {
    pub fn name(self) -> &'static str {
        match self {
            PromptKind::ConfirmObject => "confirm_object",
            PromptKind::ChooseAction => "choose_action",
            PromptKind::LabelUnknownObject => "label_unknown_object",
            PromptKind::TeachSkill => "teach_skill",
        }
    }
}

impl std::str::FromStr for PromptKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            PromptKind::ConfirmObject,
            PromptKind::ChooseAction,
            PromptKind::LabelUnknownObject,
            PromptKind::TeachSkill,
        ]
        .into_iter()
        .find(|k| k.name() == s)
        .ok_or_else(|| format!("unknown prompt kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptState {
    Open,
    Answered,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PromptPayload {
    /// Closest-match proposal awaiting accept/reject.
    ConfirmObject { proposal: ResolutionOutcome },
    /// No action edge; the operator may link a near miss, teach a skill or
    /// decline.
    ChooseAction {
        actor_type: String,
        action: String,
        object_type: String,
        near_misses: Vec<NearMiss>,
        frame: IntentFrame,
    },
    /// Observation that matched no known type.
    LabelUnknownObject {
        observation: Observation,
        detected: Vec<PropertyValue>,
        nearest: Option<(String, f64)>,
    },
    /// No action edge and nothing to link: a skill must be taught.
    TeachSkill {
        actor_type: String,
        action: String,
        object_type: String,
        frame: IntentFrame,
    },
}

impl PromptPayload {
    pub fn kind(&self) -> PromptKind {
        match self {
            PromptPayload::ConfirmObject { .. } => PromptKind::ConfirmObject,
            PromptPayload::ChooseAction { .. } => PromptKind::ChooseAction,
            PromptPayload::LabelUnknownObject { .. } => PromptKind::LabelUnknownObject,
            PromptPayload::TeachSkill { .. } => PromptKind::TeachSkill,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prompt {
    pub id: PromptId,
    pub created_at: u64,
    pub state: PromptState,
    pub payload: PromptPayload,
}

impl Prompt {
    pub fn kind(&self) -> PromptKind {
        self.payload.kind()
    }
}

/// Operator reply. Which variants are valid depends on the prompt kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "choice", rename_all = "snake_case", deny_unknown_fields)]
pub enum Choice {
    /// ConfirmObject.
    Confirm { accept: bool },
    /// ChooseAction: reuse the skill of the near miss on `object_type`.
    LinkAction { object_type: String },
    /// ChooseAction or TeachSkill: record a new skill and bind the action to it.
    TeachAction { skill: String, steps: Vec<Step> },
    /// ChooseAction or TeachSkill.
    Decline,
    /// LabelUnknownObject: create a type. Slots default to the detected
    /// property names.
    NewType {
        label: String,
        #[serde(default)]
        parent: Option<String>,
        #[serde(default)]
        slots: Option<Vec<String>>,
    },
    /// LabelUnknownObject: the object is an instance of a known type.
    ExistingType { label: String },
    /// LabelUnknownObject: ignore the observation.
    Discard,
}

impl Choice {
    pub fn name(&self) -> &'static str {
        match self {
            Choice::Confirm { .. } => "confirm",
            Choice::LinkAction { .. } => "link_action",
            Choice::TeachAction { .. } => "teach_action",
            Choice::Decline => "decline",
            Choice::NewType { .. } => "new_type",
            Choice::ExistingType { .. } => "existing_type",
            Choice::Discard => "discard",
        }
    }

    fn fits(&self, kind: PromptKind) -> bool {
        matches!(
            (kind, self),
            (PromptKind::ConfirmObject, Choice::Confirm { .. })
                | (PromptKind::ChooseAction, Choice::LinkAction { .. })
                | (PromptKind::ChooseAction | PromptKind::TeachSkill, Choice::TeachAction { .. } | Choice::Decline)
                | (
                    PromptKind::LabelUnknownObject,
                    Choice::NewType { .. } | Choice::ExistingType { .. } | Choice::Discard
                )
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub prompt_id: PromptId,
    #[serde(flatten)]
    pub choice: Choice,
}

/// One change an answer made.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "effect", rename_all = "snake_case")]
pub enum Effect {
    TypeCreated { label: String, parent: Option<String> },
    SignatureRegistered { type_label: String },
    InstanceCreated { id: NodeId, label: String, type_label: String },
    SkillRecorded { name: String },
    ActionDefined {
        actor_type: String,
        action: String,
        object_type: String,
        skill_ref: String,
    },
    ObjectAccepted { label: String },
    ObjectRejected { label: String },
    Discarded,
    Declined,
}

impl Effect {
    /// Whether the effect changed the graph.
    pub fn touches_graph(&self) -> bool {
        matches!(
            self,
            Effect::TypeCreated { .. } | Effect::InstanceCreated { .. } | Effect::ActionDefined { .. }
        )
    }
}

/// What the caller should do once an answer is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "next", rename_all = "snake_case")]
pub enum FollowUp {
    None,
    /// An accepted proposal: run it.
    Execute { plan: ResolvedPlan },
    /// Knowledge changed: resolve the original instruction again.
    Reresolve { frame: IntentFrame },
    /// The dialogue settled on a final outcome.
    Outcome { outcome: ResolutionOutcome },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answered {
    pub prompt: Prompt,
    pub effects: Vec<Effect>,
    pub follow_up: FollowUp,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SessionError {
    #[error("a prompt is already open")]
    DialogueBusy,
    #[error("unknown prompt {0}")]
    UnknownPrompt(PromptId),
    #[error("prompt {0} is no longer open")]
    PromptClosed(PromptId),
    #[error("choice `{got}` does not fit a {expected} prompt")]
    ShapeMismatch { expected: &'static str, got: &'static str },
    #[error("invalid choice: {0}")]
    InvalidChoice(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Perception(#[from] PerceptionError),
    #[error(transparent)]
    Skill(#[from] ExecError),
    #[error(transparent)]
    Resolve(#[from] ResolveError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionConfig {
    /// Open prompts older than this (in clock units) expire.
    pub idle_timeout: Option<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct Session {
    config: SessionConfig,
    prompts: Vec<Prompt>,
    pending_unknowns: VecDeque<Observation>,
}

/// Records a taught skill. Empty step lists are allowed.
pub fn teach_skill(registry: &mut SkillRegistry, name: &str, steps: Vec<Step>) -> Result<(), ExecError> {
    registry.register(Skill {
        name: name.to_string(),
        steps,
    })
}

impl Session {
    pub fn new(config: SessionConfig) -> Self {
        Self {
            config,
            ..Default::default()
        }
    }

    pub fn config(&self) -> SessionConfig {
        self.config
    }

    /// All prompts ever raised, oldest first.
    pub fn prompts(&self) -> &[Prompt] {
        &self.prompts
    }

    pub fn prompt(&self, id: PromptId) -> Option<&Prompt> {
        self.prompts.iter().find(|p| p.id == id)
    }

    pub fn open_prompt(&self) -> Option<&Prompt> {
        self.prompts.last().filter(|p| p.state == PromptState::Open)
    }

    pub fn pending_unknowns(&self) -> usize {
        self.pending_unknowns.len()
    }

    pub fn queue_unknown(&mut self, obs: Observation) {
        self.pending_unknowns.push_back(obs);
    }

    pub fn clear_pending(&mut self) {
        self.pending_unknowns.clear();
    }

    /// Opens the next queued unknown-object prompt if nothing is open.
    pub fn raise_pending(&mut self, now: u64) -> Option<Prompt> {
        if self.open_prompt().is_some() {
            return None;
        }
        let obs = self.pending_unknowns.pop_front()?;
        Some(self.raise_unknown_object(obs, None, now).expect("no open prompt"))
    }

    /// Expires the open prompt if it has been idle too long.
    pub fn expire(&mut self, now: u64) -> Option<PromptId> {
        let timeout = self.config.idle_timeout?;
        let p = self.prompts.last_mut().filter(|p| p.state == PromptState::Open)?;
        if now.saturating_sub(p.created_at) < timeout {
            return None;
        }
        p.state = PromptState::Expired;
        tracing::info!(prompt = %p.id, "prompt expired");
        Some(p.id)
    }

    pub fn raise(&mut self, payload: PromptPayload, now: u64) -> Result<Prompt, SessionError> {
        if self.open_prompt().is_some() {
            return Err(SessionError::DialogueBusy);
        }
        let id = PromptId(self.prompts.last().map_or(1, |p| p.id.0 + 1));
        let prompt = Prompt {
            id,
            created_at: now,
            state: PromptState::Open,
            payload,
        };
        self.prompts.push(prompt.clone());
        Ok(prompt)
    }

    pub fn raise_unknown_object(&mut self, obs: Observation, nearest: Option<(String, f64)>, now: u64) -> Result<Prompt, SessionError> {
        let detected = obs.detected_properties();
        self.raise(
            PromptPayload::LabelUnknownObject {
                observation: obs,
                detected,
                nearest,
            },
            now,
        )
    }

    /// Opens the prompt matching a resolution outcome that needs the
    /// operator. `None` for outcomes that need no dialogue.
    pub fn raise_for_outcome(&mut self, outcome: &ResolutionOutcome, now: u64) -> Result<Option<Prompt>, SessionError> {
        let payload = match outcome {
            ResolutionOutcome::NeedsObjectConfirmation { .. } => PromptPayload::ConfirmObject {
                proposal: outcome.clone(),
            },
            ResolutionOutcome::NeedsActionConfirmation {
                actor_type,
                action,
                object_type,
                near_misses,
                frame,
            } if near_misses.is_empty() => PromptPayload::TeachSkill {
                actor_type: actor_type.clone(),
                action: action.clone(),
                object_type: object_type.clone(),
                frame: frame.clone(),
            },
            ResolutionOutcome::NeedsActionConfirmation {
                actor_type,
                action,
                object_type,
                near_misses,
                frame,
            } => PromptPayload::ChooseAction {
                actor_type: actor_type.clone(),
                action: action.clone(),
                object_type: object_type.clone(),
                near_misses: near_misses.clone(),
                frame: frame.clone(),
            },
            _ => return Ok(None),
        };
        self.raise(payload, now).map(Some)
    }

    /// Applies an answer. On error nothing changes: neither the world nor
    /// the prompt state.
    pub fn answer(&mut self, world: &mut World, id: PromptId, choice: Choice) -> Result<Answered, SessionError> {
        let idx = self
            .prompts
            .iter()
            .position(|p| p.id == id)
            .ok_or(SessionError::UnknownPrompt(id))?;
        let prompt = &self.prompts[idx];
        if prompt.state != PromptState::Open {
            return Err(SessionError::PromptClosed(id));
        }
        if !choice.fits(prompt.kind()) {
            return Err(SessionError::ShapeMismatch {
                expected: prompt.kind().name(),
                got: choice.name(),
            });
        }
        let mut scratch = world.clone();
        let (effects, follow_up) = apply(&mut scratch, &prompt.payload, choice)?;
        *world = scratch;
        let prompt = &mut self.prompts[idx];
        prompt.state = PromptState::Answered;
        Ok(Answered {
            prompt: prompt.clone(),
            effects,
            follow_up,
        })
    }
}

fn apply(world: &mut World, payload: &PromptPayload, choice: Choice) -> Result<(Vec<Effect>, FollowUp), SessionError> {
    let mut effects = Vec::new();
    let follow_up = match (payload, choice) {
        (PromptPayload::ConfirmObject { proposal }, Choice::Confirm { accept }) => {
            let label = match proposal {
                ResolutionOutcome::NeedsObjectConfirmation { proposed_label, .. } => proposed_label.clone(),
                _ => String::new(),
            };
            match confirm_object(&world.graph, proposal, accept)? {
                ResolutionOutcome::Resolved { plan } => {
                    effects.push(Effect::ObjectAccepted { label });
                    FollowUp::Execute { plan }
                }
                outcome => {
                    effects.push(Effect::ObjectRejected { label });
                    FollowUp::Outcome { outcome }
                }
            }
        }
        (
            PromptPayload::ChooseAction {
                actor_type,
                action,
                object_type,
                near_misses,
                frame,
            },
            Choice::LinkAction { object_type: chosen },
        ) => {
            let nm = near_misses
                .iter()
                .find(|n| n.object_type.eq_ignore_ascii_case(chosen.trim()))
                .ok_or_else(|| SessionError::InvalidChoice(format!("`{chosen}` is not among the offered actions")))?;
            world.graph.define_action(actor_type, action, object_type, &nm.skill_ref)?;
            effects.push(Effect::ActionDefined {
                actor_type: actor_type.clone(),
                action: action.clone(),
                object_type: object_type.clone(),
                skill_ref: nm.skill_ref.clone(),
            });
            FollowUp::Reresolve { frame: frame.clone() }
        }
        (
            PromptPayload::ChooseAction {
                actor_type,
                action,
                object_type,
                frame,
                ..
            }
            | PromptPayload::TeachSkill {
                actor_type,
                action,
                object_type,
                frame,
            },
            Choice::TeachAction { skill, steps },
        ) => {
            teach_skill(&mut world.skills, &skill, steps)?;
            effects.push(Effect::SkillRecorded { name: skill.clone() });
            world.graph.define_action(actor_type, action, object_type, &skill)?;
            effects.push(Effect::ActionDefined {
                actor_type: actor_type.clone(),
                action: action.clone(),
                object_type: object_type.clone(),
                skill_ref: skill,
            });
            FollowUp::Reresolve { frame: frame.clone() }
        }
        (PromptPayload::ChooseAction { .. } | PromptPayload::TeachSkill { .. }, Choice::Decline) => {
            effects.push(Effect::Declined);
            FollowUp::None
        }
        (PromptPayload::LabelUnknownObject { observation, .. }, Choice::NewType { label, parent, slots }) => {
            let slots = slots.unwrap_or_else(|| observation.detected_properties().into_iter().map(|p| p.slot).collect());
            world.graph.add_type(&label, parent.as_deref(), &slots)?;
            effects.push(Effect::TypeCreated {
                label: label.clone(),
                parent,
            });
            learn_observation(world, &label, observation, &mut effects)?;
            FollowUp::None
        }
        (PromptPayload::LabelUnknownObject { observation, .. }, Choice::ExistingType { label }) => {
            let canonical = world
                .graph
                .find_type(&label)
                .and_then(|t| world.graph.type_label(t))
                .ok_or_else(|| GraphError::UnknownType(label.clone()))?
                .to_string();
            learn_observation(world, &canonical, observation, &mut effects)?;
            FollowUp::None
        }
        (PromptPayload::LabelUnknownObject { .. }, Choice::Discard) => {
            effects.push(Effect::Discarded);
            FollowUp::None
        }
        (payload, choice) => {
            return Err(SessionError::ShapeMismatch {
                expected: payload.kind().name(),
                got: choice.name(),
            })
        }
    };
    Ok((effects, follow_up))
}

/// Registers the observation's signature under `type_label` and
/// instantiates it, so re-ingesting the same object matches.
fn learn_observation(world: &mut World, type_label: &str, obs: &Observation, effects: &mut Vec<Effect>) -> Result<(), SessionError> {
    world.signatures.register(&world.graph, type_label, obs.signature.clone())?;
    effects.push(Effect::SignatureRegistered {
        type_label: type_label.to_string(),
    });
    let made = instantiate_observation(&mut world.graph, type_label, obs)?;
    effects.push(Effect::InstanceCreated {
        id: made.id,
        label: made.label,
        type_label: made.type_label,
    });
    Ok(())
}

/// Nearest known type reported for an unknown observation, if any.
pub fn nearest_of(c: &Classification) -> Option<(String, f64)> {
    match c {
        Classification::Unknown { nearest } => nearest.clone(),
        Classification::Match { type_label, distance } => Some((type_label.clone(), *distance)),
    }
}
