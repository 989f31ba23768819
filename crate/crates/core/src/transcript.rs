//! Human-readable rendering of engine activity.
//!
//! Each instruction prints three labelled blocks, `[interpretation]`,
//! `[match]` and `[execution]`, so two runs can be compared with a plain
//! text diff. Nothing time-dependent is printed.

use crate::engine::{AnswerOutcome, Grounding, IngestOutcome, InstructionOutcome};
use crate::executor::{ExecResult, ExecutionRecord};
use crate::resolver::ResolutionOutcome;
use crate::session::{Choice, Effect, Prompt, PromptPayload};

fn join<T: ToString>(items: impl IntoIterator<Item = T>, sep: &str) -> String {
    items.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(sep)
}

pub fn ingest(out: &IngestOutcome) -> Vec<String> {
    let r = &out.report;
    let mut lines = vec![
        format!(
            "[perception] instantiated {}: {}",
            r.instantiated.len(),
            join(r.instantiated.iter().map(|o| format!("{} ({})", o.label, o.type_label)), ", ")
        ),
        format!("[perception] unknown {}, discarded {}", r.unknowns.len(), r.discarded),
    ];
    if let Some(p) = &out.prompt {
        lines.push(prompt(p));
    }
    lines
}

pub fn instruction(text: &str, out: &InstructionOutcome) -> Vec<String> {
    let mut lines = vec![format!("> {text}"), format!("[interpretation] {}", out.frame)];
    lines.extend(grounding(&out.grounding));
    lines
}

pub fn grounding(g: &Grounding) -> Vec<String> {
    let mut lines = vec![format!("[match] {}", resolution(&g.resolution))];
    if let Some(rec) = &g.execution {
        lines.push(format!("[execution] {}", execution(rec)));
    }
    if let Some(p) = &g.prompt {
        lines.push(prompt(p));
    }
    lines
}

pub fn resolution(o: &ResolutionOutcome) -> String {
    match o {
        ResolutionOutcome::Resolved { plan } => format!(
            "resolved: {} {} {} via {}",
            plan.actor_label, plan.action_label, plan.patient_label, plan.skill_ref
        ),
        ResolutionOutcome::NeedsObjectConfirmation {
            requested_type,
            proposed_label,
            mismatched,
            ..
        } => format!(
            "needs_object_confirmation: no {requested_type} with {}; closest is {proposed_label} ({})",
            join(mismatched.iter().map(|m| format!("{}={}", m.slot, m.requested)), " "),
            join(
                mismatched.iter().map(|m| format!(
                    "{}={}",
                    m.slot,
                    m.actual.as_ref().map_or("unset".to_string(), |v| v.to_string())
                )),
                " "
            )
        ),
        ResolutionOutcome::NeedsActionConfirmation {
            actor_type,
            action,
            object_type,
            near_misses,
            ..
        } => {
            let offers = if near_misses.is_empty() {
                "none".to_string()
            } else {
                join(near_misses.iter().map(|n| format!("{} ({})", n.object_type, n.skill_ref)), ", ")
            };
            format!("needs_action_confirmation: {actor_type} cannot {action} a {object_type}; known {action} targets: {offers}")
        }
        ResolutionOutcome::UnknownTypeWord { word } => format!("unknown_type_word: `{word}`"),
        ResolutionOutcome::NoInstanceInScene { type_label } => format!("no_instance_in_scene: no matching {type_label} in the scene"),
        ResolutionOutcome::NoActorInScene { actor_type } => format!("no_actor_in_scene: no {actor_type} in the scene"),
    }
}

pub fn execution(rec: &ExecutionRecord) -> String {
    let status = match &rec.result {
        ExecResult::Success => "success".to_string(),
        ExecResult::Failed { step, reason } => format!("failed at step {step}: {reason}"),
    };
    let mut s = format!("{} {}: {status}, {} steps", rec.plan.skill_ref, rec.plan.patient_label, rec.steps_run.len());
    if !rec.scene_delta.removed.is_empty() {
        s.push_str(&format!("; removed [{}]", join(&rec.scene_delta.removed, ", ")));
    }
    if !rec.scene_delta.moved.is_empty() {
        s.push_str(&format!(
            "; moved [{}]",
            join(rec.scene_delta.moved.iter().map(|m| format!("{} to {}", m.label, m.pose)), ", ")
        ));
    }
    s
}

pub fn prompt(p: &Prompt) -> String {
    let body = match &p.payload {
        PromptPayload::ConfirmObject { proposal } => match proposal {
            ResolutionOutcome::NeedsObjectConfirmation { proposed_label, plan, .. } => {
                format!("{} {proposed_label} instead?", plan.action_label)
            }
            other => resolution(other),
        },
        PromptPayload::ChooseAction {
            action,
            object_type,
            near_misses,
            ..
        } => format!(
            "how should {action} work on {object_type}? link one of [{}], teach a skill, or decline",
            join(near_misses.iter().map(|n| n.object_type.as_str()), ", ")
        ),
        PromptPayload::LabelUnknownObject { detected, nearest, .. } => {
            let mut s = format!("new object with {}", join(detected, " "));
            if let Some((ty, d)) = nearest {
                s.push_str(&format!(" (nearest {ty} at {d:.3})"));
            }
            s
        }
        PromptPayload::TeachSkill { action, object_type, .. } => {
            format!("no skill to {action} a {object_type}; teach one or decline")
        }
    };
    format!("[prompt {}] {}: {body}", p.id, p.kind().name())
}

pub fn choice(c: &Choice) -> String {
    match c {
        Choice::Confirm { accept } => format!("confirm {}", if *accept { "yes" } else { "no" }),
        Choice::LinkAction { object_type } => format!("link_action {object_type}"),
        Choice::TeachAction { skill, steps } => format!("teach_action {skill} [{}]", join(steps, ", ")),
        Choice::Decline => "decline".into(),
        Choice::NewType { label, parent, slots } => {
            let mut s = format!("new_type {label}");
            if let Some(p) = parent {
                s.push_str(&format!(" is {p}"));
            }
            if let Some(sl) = slots {
                s.push_str(&format!(" slots [{}]", join(sl, ", ")));
            }
            s
        }
        Choice::ExistingType { label } => format!("existing_type {label}"),
        Choice::Discard => "discard".into(),
    }
}

pub fn effect(e: &Effect) -> String {
    match e {
        Effect::TypeCreated { label, parent: Some(p) } => format!("type_created {label} is {p}"),
        Effect::TypeCreated { label, parent: None } => format!("type_created {label}"),
        Effect::SignatureRegistered { type_label } => format!("signature_registered {type_label}"),
        Effect::InstanceCreated { label, type_label, .. } => format!("instance_created {label} ({type_label})"),
        Effect::SkillRecorded { name } => format!("skill_recorded {name}"),
        Effect::ActionDefined {
            actor_type,
            action,
            object_type,
            skill_ref,
        } => format!("action_defined {actor_type} {action} {object_type} via {skill_ref}"),
        Effect::ObjectAccepted { label } => format!("object_accepted {label}"),
        Effect::ObjectRejected { label } => format!("object_rejected {label}"),
        Effect::Discarded => "discarded".into(),
        Effect::Declined => "declined".into(),
    }
}

pub fn answer(c: &Choice, out: &AnswerOutcome) -> Vec<String> {
    let mut lines = vec![
        format!("< {} {}", out.prompt.id, choice(c)),
        format!("[effects] {}", join(out.effects.iter().map(effect), "; ")),
    ];
    if let Some(g) = &out.grounding {
        lines.extend(grounding(g));
    }
    if let Some(p) = &out.next_prompt {
        lines.push(prompt(p));
    }
    lines
}
