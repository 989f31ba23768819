//! Skill registry and plan execution against the scene.
//!
//! A skill is a named list of primitive steps. Running a resolved plan
//! looks the skill up by the plan's `skill_ref`, runs the steps in order and
//! applies their effects to the scene: a picked object leaves the scene, a
//! placed one gets a new pose. Every run produces an [`ExecutionRecord`]
//! whether it succeeds or not.

use std::collections::BTreeMap;
use std::io::{self, BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, KnowledgeGraph, Pose};
use crate::resolver::ResolvedPlan;

/// Robot that owns the built-in skills.
pub const SEED_ACTOR: &str = "YuMi";
/// Object types that get built-in pick and place skills.
pub const SEED_OBJECT_TYPES: [&str; 4] = ["Nut", "Screw", "Box", "Clip"];

const APPROACH: Pose = Pose {
    position: [300.0, 0.0, 150.0],
    orientation: [0.0, 90.0, 0.0],
};
const LIFT: Pose = Pose {
    position: [300.0, 0.0, 300.0],
    orientation: [0.0, 90.0, 0.0],
};
const DROP: Pose = Pose {
    position: [400.0, -200.0, 50.0],
    orientation: [0.0, 90.0, 0.0],
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Step {
    MoveTo { pose: Pose },
    GripClose,
    GripOpen,
    /// The patient leaves the scene (it is now held by the robot).
    RemovePatient,
    /// The patient is put down at `pose`.
    PlacePatient { pose: Pose },
}

impl std::fmt::Display for Step {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Step::MoveTo { pose } => write!(f, "move_to {pose}"),
            Step::GripClose => f.write_str("grip_close"),
            Step::GripOpen => f.write_str("grip_open"),
            Step::RemovePatient => f.write_str("remove_patient"),
            Step::PlacePatient { pose } => write!(f, "place_patient {pose}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    pub name: String,
    pub steps: Vec<Step>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExecError {
    #[error("skill `{0}` is already registered")]
    DuplicateSkill(String),
    #[error("skill `{0}` is not registered")]
    UnknownSkill(String),
    #[error("skill name must be non-empty and free of whitespace: `{0}`")]
    InvalidSkillName(String),
    #[error("plan refers to `{0}`, which is no longer in the scene")]
    StalePlan(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SkillRegistry {
    skills: BTreeMap<String, Skill>,
}

impl SkillRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, skill: Skill) -> Result<(), ExecError> {
        if skill.name.is_empty() || skill.name.chars().any(char::is_whitespace) {
            return Err(ExecError::InvalidSkillName(skill.name));
        }
        if self.skills.contains_key(&skill.name) {
            return Err(ExecError::DuplicateSkill(skill.name));
        }
        self.skills.insert(skill.name.clone(), skill);
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Skill> {
        self.skills.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.skills.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.skills.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skills.is_empty()
    }

    /// Skills sorted by name.
    pub fn iter(&self) -> impl Iterator<Item = &Skill> {
        self.skills.values()
    }
}

pub fn pick_skill(object_type: &str) -> Skill {
    Skill {
        name: format!("pick_{}_skill", object_type.to_lowercase()),
        steps: vec![
            Step::GripOpen,
            Step::MoveTo { pose: APPROACH },
            Step::GripClose,
            Step::MoveTo { pose: LIFT },
            Step::RemovePatient,
        ],
    }
}

pub fn place_skill(object_type: &str) -> Skill {
    Skill {
        name: format!("place_{}_skill", object_type.to_lowercase()),
        steps: vec![
            Step::MoveTo { pose: DROP },
            Step::PlacePatient { pose: DROP },
            Step::GripOpen,
            Step::MoveTo { pose: LIFT },
        ],
    }
}

/// Registers pick and place skills for every seed object type and binds
/// them to the seed actor in the graph. All-or-nothing: fails without side
/// effects if any skill name is taken or a type is missing.
pub fn register_builtin_skills(graph: &mut KnowledgeGraph, registry: &mut SkillRegistry) -> Result<usize, ExecError> {
    let mut bindings = Vec::new();
    for ty in SEED_OBJECT_TYPES {
        bindings.push(("pick", ty, pick_skill(ty)));
        bindings.push(("place", ty, place_skill(ty)));
    }
    if let Some((_, _, s)) = bindings.iter().find(|(_, _, s)| registry.contains(&s.name)) {
        return Err(ExecError::DuplicateSkill(s.name.clone()));
    }
    let mut g = graph.clone();
    for (action, ty, skill) in &bindings {
        g.define_action(SEED_ACTOR, action, ty, &skill.name)?;
    }
    let n = bindings.len();
    for (_, _, skill) in bindings {
        registry.register(skill)?;
    }
    *graph = g;
    Ok(n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRun {
    pub index: usize,
    pub step: Step,
    pub tick: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ExecResult {
    Success,
    Failed { step: usize, reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MovedObject {
    pub label: String,
    pub pose: Pose,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SceneDelta {
    pub removed: Vec<String>,
    pub moved: Vec<MovedObject>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionRecord {
    pub plan: ResolvedPlan,
    pub steps_run: Vec<StepRun>,
    pub result: ExecResult,
    pub scene_delta: SceneDelta,
}

impl ExecutionRecord {
    pub fn succeeded(&self) -> bool {
        self.result == ExecResult::Success
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutorConfig {
    /// Stamp steps with wall-clock milliseconds instead of a step counter.
    #[serde(default)]
    pub wall_clock: bool,
    /// Fault injection: the step with this index fails.
    #[serde(default)]
    pub fail_step: Option<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Executor {
    config: ExecutorConfig,
    tick: u64,
}

impl Executor {
    pub fn new(config: ExecutorConfig) -> Self {
        Self { config, tick: 0 }
    }

    pub fn config(&self) -> &ExecutorConfig {
        &self.config
    }

    pub fn set_fail_step(&mut self, step: Option<usize>) {
        self.config.fail_step = step;
    }

    fn stamp(&mut self) -> u64 {
        if self.config.wall_clock {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_millis() as u64)
                .unwrap_or(0)
        } else {
            self.tick += 1;
            self.tick
        }
    }

    /// Runs `plan`. Errors only when the plan cannot start (stale patient,
    /// unknown skill); a step that fails midway yields a `Failed` record
    /// with the effects of the steps before it kept.
    pub fn execute(&mut self, graph: &mut KnowledgeGraph, skills: &SkillRegistry, plan: &ResolvedPlan) -> Result<ExecutionRecord, ExecError> {
        for (id, label) in [
            (plan.patient_instance, &plan.patient_label),
            (plan.actor_instance, &plan.actor_label),
        ] {
            if !graph.is_live_instance(id) || graph.node(id).is_some_and(|n| n.label != *label) {
                return Err(ExecError::StalePlan(label.clone()));
            }
        }
        let skill = skills
            .get(&plan.skill_ref)
            .ok_or_else(|| ExecError::UnknownSkill(plan.skill_ref.clone()))?;

        let mut record = ExecutionRecord {
            plan: plan.clone(),
            steps_run: Vec::new(),
            result: ExecResult::Success,
            scene_delta: SceneDelta::default(),
        };
        for (index, step) in skill.steps.iter().enumerate() {
            if let Err(reason) = self.apply(graph, plan, index, step, &mut record.scene_delta) {
                tracing::warn!(skill = %skill.name, step = index, %reason, "step failed");
                record.result = ExecResult::Failed { step: index, reason };
                return Ok(record);
            }
            let tick = self.stamp();
            record.steps_run.push(StepRun {
                index,
                step: step.clone(),
                tick,
            });
        }
        Ok(record)
    }

    fn apply(&self, graph: &mut KnowledgeGraph, plan: &ResolvedPlan, index: usize, step: &Step, delta: &mut SceneDelta) -> Result<(), String> {
        if self.config.fail_step == Some(index) {
            return Err("injected fault".to_string());
        }
        match step {
            Step::MoveTo { pose } | Step::PlacePatient { pose } if !pose.is_finite() => Err("pose is not finite".to_string()),
            Step::MoveTo { .. } | Step::GripClose | Step::GripOpen => Ok(()),
            Step::RemovePatient => {
                graph.remove_instance(plan.patient_instance).map_err(|_| format!("{} is not in the scene", plan.patient_label))?;
                delta.removed.push(plan.patient_label.clone());
                Ok(())
            }
            Step::PlacePatient { pose } => {
                graph
                    .set_instance_pose(plan.patient_instance, *pose)
                    .map_err(|_| format!("{} is not in the scene", plan.patient_label))?;
                let pose = graph.instance_pose(plan.patient_instance).expect("just set");
                delta.moved.push(MovedObject {
                    label: plan.patient_label.clone(),
                    pose,
                });
                Ok(())
            }
        }
    }
}

/// Appends one record as a JSON line.
pub fn write_log_line(out: &mut impl Write, record: &ExecutionRecord) -> io::Result<()> {
    serde_json::to_writer(&mut *out, record)?;
    out.write_all(b"\n")
}

/// Reads a JSON-lines execution log, skipping blank lines.
pub fn read_log(input: impl BufRead) -> io::Result<Vec<ExecutionRecord>> {
    let mut records = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        records.push(serde_json::from_str(&line)?);
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PropertyValue;
    use crate::nlparse::Parser;
    use crate::resolver::{resolve, ResolutionOutcome};

    fn setup() -> (KnowledgeGraph, SkillRegistry) {
        let mut g = KnowledgeGraph::new();
        g.add_type(SEED_ACTOR, None, &["position"]).unwrap();
        for t in SEED_OBJECT_TYPES {
            g.add_type(t, None, &["color", "position"]).unwrap();
        }
        let mut r = SkillRegistry::new();
        assert_eq!(register_builtin_skills(&mut g, &mut r).unwrap(), 8);
        g.instantiate(SEED_ACTOR, &[], Pose::origin()).unwrap();
        g.instantiate("Nut", &[PropertyValue::text("color", "green")], Pose::at(10.0, 0.0, 0.0)).unwrap();
        g.instantiate("Screw", &[], Pose::at(20.0, 0.0, 0.0)).unwrap();
        (g, r)
    }

    fn plan(g: &KnowledgeGraph, text: &str) -> ResolvedPlan {
        match resolve(g, &Parser::default().parse_heuristic(text).unwrap()) {
            ResolutionOutcome::Resolved { plan } => plan,
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn builtins_register_once() {
        let (mut g, mut r) = setup();
        assert_eq!(r.len(), 8);
        assert!(r.contains("pick_screw_skill") && r.contains("place_clip_skill"));
        let before = (g.clone(), r.clone());
        assert_eq!(
            register_builtin_skills(&mut g, &mut r),
            Err(ExecError::DuplicateSkill("pick_nut_skill".into()))
        );
        assert_eq!((g, r), before);
    }

    #[test]
    fn pick_removes_patient() {
        let (mut g, r) = setup();
        let p = plan(&g, "YuMi, pick the screw!");
        let mut ex = Executor::default();
        let rec = ex.execute(&mut g, &r, &p).unwrap();
        assert!(rec.succeeded());
        assert_eq!(rec.steps_run.len(), r.get("pick_screw_skill").unwrap().steps.len());
        let ticks: Vec<u64> = rec.steps_run.iter().map(|s| s.tick).collect();
        assert_eq!(ticks, [1, 2, 3, 4, 5]);
        assert_eq!(rec.scene_delta.removed, ["screw_1"]);
        assert!(g.scene_node("screw_1").is_none());
        assert!(g.scene_node("nut_1").is_some());
        g.check_invariants().unwrap();

        assert_eq!(ex.execute(&mut g, &r, &p), Err(ExecError::StalePlan("screw_1".into())));
    }

    #[test]
    fn place_moves_patient() {
        let (mut g, r) = setup();
        let p = plan(&g, "YuMi, place the nut!");
        let rec = Executor::default().execute(&mut g, &r, &p).unwrap();
        assert!(rec.succeeded());
        assert_eq!(rec.scene_delta.moved.len(), 1);
        assert_eq!(g.instance_pose(p.patient_instance), Some(DROP));
    }

    #[test]
    fn injected_fault_stops_midway() {
        let (mut g, r) = setup();
        let p = plan(&g, "YuMi, pick the screw!");
        let mut ex = Executor::new(ExecutorConfig {
            fail_step: Some(2),
            ..Default::default()
        });
        let rec = ex.execute(&mut g, &r, &p).unwrap();
        assert_eq!(
            rec.result,
            ExecResult::Failed {
                step: 2,
                reason: "injected fault".into()
            }
        );
        assert_eq!(rec.steps_run.len(), 2);
        assert!(g.scene_node("screw_1").is_some());
    }

    #[test]
    fn unknown_skill_is_an_error() {
        let (mut g, _) = setup();
        let p = plan(&g, "YuMi, pick the screw!");
        assert_eq!(
            Executor::default().execute(&mut g, &SkillRegistry::new(), &p),
            Err(ExecError::UnknownSkill("pick_screw_skill".into()))
        );
    }

    #[test]
    fn double_remove_fails_the_second_step() {
        let (mut g, mut r) = setup();
        r.register(Skill {
            name: "twice".into(),
            steps: vec![Step::RemovePatient, Step::RemovePatient],
        })
        .unwrap();
        let mut p = plan(&g, "YuMi, pick the screw!");
        p.skill_ref = "twice".into();
        let rec = Executor::default().execute(&mut g, &r, &p).unwrap();
        assert!(matches!(rec.result, ExecResult::Failed { step: 1, .. }));
        assert_eq!(rec.scene_delta.removed, ["screw_1"]);
    }

    #[test]
    fn log_round_trips() {
        let (mut g, r) = setup();
        let p = plan(&g, "YuMi, pick the screw!");
        let rec = Executor::default().execute(&mut g, &r, &p).unwrap();
        let mut buf = Vec::new();
        write_log_line(&mut buf, &rec).unwrap();
        write_log_line(&mut buf, &rec).unwrap();
        assert_eq!(buf.iter().filter(|b| **b == b'\n').count(), 2);
        assert_eq!(read_log(&buf[..]).unwrap(), vec![rec.clone(), rec]);
    }

    #[test]
    fn invalid_skill_names() {
        let mut r = SkillRegistry::new();
        for bad in ["", "two words"] {
            assert!(matches!(
                r.register(Skill {
                    name: bad.into(),
                    steps: vec![]
                }),
                Err(ExecError::InvalidSkillName(_))
            ));
        }
    }
}
