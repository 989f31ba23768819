//! Grounds an [`IntentFrame`] against the knowledge graph.
//!
//! Named roles are looked up among prior types, candidate instances are
//! gathered over the type closure and filtered by the requested properties,
//! and the action edge is searched between the actor and patient types.
//! Anything short of a full match comes back as an outcome variant that the
//! dialogue layer can turn into a question.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{ActionLookup, KnowledgeGraph, NearMiss, NodeId, Value};
use crate::nlparse::{Determiner, IntentFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResolvedPlan {
    pub actor_instance: NodeId,
    pub actor_label: String,
    pub patient_instance: NodeId,
    pub patient_label: String,
    pub patient_type: String,
    pub action_label: String,
    pub skill_ref: String,
    pub frame: IntentFrame,
}

/// A requested property the proposed instance does not satisfy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyMismatch {
    pub slot: String,
    pub requested: Value,
    pub actual: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum ResolutionOutcome {
    Resolved {
        plan: ResolvedPlan,
    },
    /// No instance satisfies every filter; the closest one is proposed.
    NeedsObjectConfirmation {
        requested_type: String,
        proposed: NodeId,
        proposed_label: String,
        mismatched: Vec<PropertyMismatch>,
        plan: ResolvedPlan,
    },
    /// No action edge for this (actor, action, object); other object types
    /// that do carry the action are listed.
    NeedsActionConfirmation {
        actor_type: String,
        action: String,
        object_type: String,
        near_misses: Vec<NearMiss>,
        frame: IntentFrame,
    },
    UnknownTypeWord {
        word: String,
    },
    NoInstanceInScene {
        type_label: String,
    },
    NoActorInScene {
        actor_type: String,
    },
}

impl ResolutionOutcome {
    pub fn variant_name(&self) -> &'static str {
        match self {
            ResolutionOutcome::Resolved { .. } => "resolved",
            ResolutionOutcome::NeedsObjectConfirmation { .. } => "needs_object_confirmation",
            ResolutionOutcome::NeedsActionConfirmation { .. } => "needs_action_confirmation",
            ResolutionOutcome::UnknownTypeWord { .. } => "unknown_type_word",
            ResolutionOutcome::NoInstanceInScene { .. } => "no_instance_in_scene",
            ResolutionOutcome::NoActorInScene { .. } => "no_actor_in_scene",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ResolveError {
    #[error("proposal refers to an instance that is no longer in the scene")]
    StaleProposal,
    #[error("outcome is not an object confirmation proposal")]
    NotAProposal,
}

/// Grounds a frame. Read-only on the graph and never fails: every problem
/// is reported as an outcome variant.
pub fn resolve(graph: &KnowledgeGraph, frame: &IntentFrame) -> ResolutionOutcome {
    let Some(actor_ty) = graph.find_type(&frame.actor) else {
        return ResolutionOutcome::UnknownTypeWord {
            word: frame.actor.clone(),
        };
    };
    let Some(patient_ty) = graph.find_type(&frame.patient.type_word) else {
        return ResolutionOutcome::UnknownTypeWord {
            word: frame.patient.type_word.clone(),
        };
    };
    let actor_type = graph.type_label(actor_ty).expect("type").to_string();
    let patient_type = graph.type_label(patient_ty).expect("type").to_string();

    let actors = graph.query_instances(&actor_type, &[]).unwrap_or_default();
    let Some(&actor) = actors.first() else {
        return ResolutionOutcome::NoActorInScene { actor_type };
    };

    let all = graph.query_instances(&patient_type, &[]).unwrap_or_default();
    if all.is_empty() {
        return ResolutionOutcome::NoInstanceInScene { type_label: patient_type };
    }
    let filters = &frame.patient.modifiers;
    let matching = graph.query_instances(&patient_type, filters).unwrap_or_default();

    if let Some(&patient) = matching.first() {
        if matching.len() > 1 && frame.patient.determiner == Determiner::Definite {
            tracing::debug!(
                candidates = matching.len(),
                chosen = %graph.node(patient).expect("live").label,
                "definite reference is ambiguous; taking the lowest-numbered instance"
            );
        }
        return match plan_for(graph, frame, actor, patient) {
            Ok(plan) => ResolutionOutcome::Resolved { plan },
            Err(outcome) => outcome,
        };
    }

    // closest match: fewest violated filters, then lowest instance number
    let violations = |id: NodeId| {
        filters
            .iter()
            .filter(|f| !graph.instance_matches(id, std::slice::from_ref(f)))
            .count()
    };
    let proposed = all
        .iter()
        .copied()
        .min_by_key(|id| violations(*id))
        .expect("non-empty");
    match plan_for(graph, frame, actor, proposed) {
        Ok(plan) => {
            let mismatched = filters
                .iter()
                .filter(|f| !graph.instance_matches(proposed, std::slice::from_ref(f)))
                .map(|f| PropertyMismatch {
                    slot: f.slot.clone(),
                    requested: f.value.clone(),
                    actual: graph.slot_value(proposed, &f.slot).cloned(),
                })
                .collect();
            ResolutionOutcome::NeedsObjectConfirmation {
                requested_type: patient_type,
                proposed,
                proposed_label: graph.node(proposed).expect("live").label.clone(),
                mismatched,
                plan,
            }
        }
        Err(outcome) => outcome,
    }
}

/// Action lookup for a concrete (actor, patient) pair. The error is the
/// outcome to report, built once and moved out.
#[allow(clippy::result_large_err)]
fn plan_for(graph: &KnowledgeGraph, frame: &IntentFrame, actor: NodeId, patient: NodeId) -> Result<ResolvedPlan, ResolutionOutcome> {
    let actor_type = concrete_type(graph, actor);
    let object_type = concrete_type(graph, patient);
    let lookup = graph
        .lookup_action(&actor_type, &frame.action, &object_type)
        .unwrap_or(ActionLookup::NearMisses(Vec::new()));
    match lookup {
        ActionLookup::Exact(m) => Ok(ResolvedPlan {
            actor_instance: actor,
            actor_label: graph.node(actor).expect("live").label.clone(),
            patient_instance: patient,
            patient_label: graph.node(patient).expect("live").label.clone(),
            patient_type: object_type,
            action_label: frame.action.clone(),
            skill_ref: m.skill_ref,
            frame: frame.clone(),
        }),
        ActionLookup::NearMisses(near_misses) => Err(ResolutionOutcome::NeedsActionConfirmation {
            actor_type,
            action: frame.action.clone(),
            object_type,
            near_misses,
            frame: frame.clone(),
        }),
    }
}

fn concrete_type(graph: &KnowledgeGraph, instance: NodeId) -> String {
    graph
        .instance_type(instance)
        .and_then(|t| graph.type_label(t))
        .unwrap_or_default()
        .to_string()
}

/// Settles a closest-match proposal. Liveness is checked against the
/// current graph, which may have changed since the proposal was made.
pub fn confirm_object(graph: &KnowledgeGraph, proposal: &ResolutionOutcome, accepted: bool) -> Result<ResolutionOutcome, ResolveError> {
    let ResolutionOutcome::NeedsObjectConfirmation {
        requested_type, plan, ..
    } = proposal
    else {
        return Err(ResolveError::NotAProposal);
    };
    if !accepted {
        return Ok(ResolutionOutcome::NoInstanceInScene {
            type_label: requested_type.clone(),
        });
    }
    if !graph.is_live_instance(plan.patient_instance) || !graph.is_live_instance(plan.actor_instance) {
        return Err(ResolveError::StaleProposal);
    }
    Ok(ResolutionOutcome::Resolved { plan: plan.clone() })
}
