//! Generators and independent oracles for property tests and the
//! acceptance suite. Built only with the `testkit` feature.
//!
//! The oracles recompute every fact from the raw node and edge lists and
//! from first principles. They do not call the graph's indexes, query
//! helpers or the classifier, so a bug there cannot hide itself.

use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use crate::executor::{Skill, Step};
use crate::graph::{
    EdgeKind, GraphError, KnowledgeGraph, Node, NodeId, NodeKind, Pose, PropertyValue, Subgraph, Value,
};
use crate::nlparse::{Determiner, IntentFrame, ObjectDescriptor};
use crate::perception::{ReferenceSignature, Signature, DESCRIPTOR_DIM};
use crate::world::{one_hot, World};

pub const TYPES: [&str; 8] = ["Part", "Nut", "Screw", "Box", "Clip", "Gear", "Bolt", "Tray"];
pub const SLOTS: [&str; 5] = ["color", "shape", "size", "position", "weight"];
pub const COLORS: [&str; 4] = ["red", "green", "blue", "gray"];
pub const SHAPES: [&str; 3] = ["big", "small", "square"];
pub const ACTIONS: [&str; 3] = ["pick", "place", "test"];
pub const SKILLS: [&str; 4] = ["skill_a", "skill_b", "skill_c", "skill_d"];

/// One random mutation. Indices are reduced modulo the pool they pick from.
#[derive(Debug, Clone)]
pub enum GraphOp {
    AddType {
        ty: usize,
        parent: Option<usize>,
        slots: Vec<usize>,
    },
    AddIs {
        child: usize,
        parent: usize,
    },
    /// Adds `SLOTS[slot]` under the type, or under its `nested`th slot.
    AddSlot {
        ty: usize,
        slot: usize,
        nested: Option<usize>,
        default: bool,
    },
    DefineAction {
        actor: usize,
        action: usize,
        object: usize,
        skill: usize,
    },
    Instantiate {
        ty: usize,
        color: Option<usize>,
        shape: Option<usize>,
        at: [i16; 3],
    },
    Remove {
        pick: usize,
    },
    Move {
        pick: usize,
        at: [i16; 3],
    },
    ClearScene,
}

pub fn arb_op() -> impl Strategy<Value = GraphOp> {
    let t = 0..TYPES.len();
    let pos = prop::array::uniform3(-500i16..500);
    prop_oneof![
        3 => (t.clone(), prop::option::of(t.clone()), prop::collection::vec(0..SLOTS.len(), 0..4))
            .prop_map(|(ty, parent, slots)| GraphOp::AddType { ty, parent, slots }),
        1 => (t.clone(), t.clone()).prop_map(|(child, parent)| GraphOp::AddIs { child, parent }),
        2 => (t.clone(), 0..SLOTS.len(), prop::option::of(0usize..4), any::<bool>())
            .prop_map(|(ty, slot, nested, default)| GraphOp::AddSlot { ty, slot, nested, default }),
        2 => (t.clone(), 0..ACTIONS.len(), t.clone(), 0..SKILLS.len())
            .prop_map(|(actor, action, object, skill)| GraphOp::DefineAction { actor, action, object, skill }),
        5 => (t, prop::option::of(0..COLORS.len()), prop::option::of(0..SHAPES.len()), pos.clone())
            .prop_map(|(ty, color, shape, at)| GraphOp::Instantiate { ty, color, shape, at }),
        2 => any::<usize>().prop_map(|pick| GraphOp::Remove { pick }),
        1 => (any::<usize>(), pos).prop_map(|(pick, at)| GraphOp::Move { pick, at }),
        1 => Just(GraphOp::ClearScene),
    ]
}

pub fn arb_ops(max_len: usize) -> impl Strategy<Value = Vec<GraphOp>> {
    prop::collection::vec(arb_op(), 1..=max_len)
}

fn pose_at(at: [i16; 3]) -> Pose {
    Pose::at(at[0] as f64, at[1] as f64, at[2] as f64)
}

fn live_instances(g: &KnowledgeGraph) -> Vec<NodeId> {
    g.nodes()
        .filter(|n| n.kind == NodeKind::ObjectInstance)
        .map(|n| n.id)
        .collect()
}

fn raw_slots(g: &KnowledgeGraph, owner: NodeId) -> Vec<(String, NodeId)> {
    let mut out: Vec<(String, NodeId)> = g
        .edges()
        .filter(|e| e.source == owner && e.kind == EdgeKind::Has)
        .map(|e| {
            let n = g.node(e.dest).expect("edge endpoint");
            (n.label.rsplit('.').next().unwrap_or(&n.label).to_string(), e.dest)
        })
        .collect();
    out.sort();
    out
}

fn raw_type(g: &KnowledgeGraph, label: &str) -> Option<NodeId> {
    g.nodes()
        .find(|n| n.kind == NodeKind::TypeConcept && n.label.eq_ignore_ascii_case(label))
        .map(|n| n.id)
}

/// What a successful op produced, for the per-step checks.
#[derive(Debug, Clone, PartialEq)]
pub enum Applied {
    Instantiated(NodeId),
    Removed(String),
    Other,
}

/// Applies `op`. Errors are expected for many random ops; the checker
/// then requires the graph to be untouched.
pub fn apply(g: &mut KnowledgeGraph, op: &GraphOp) -> Result<Applied, GraphError> {
    match op {
        GraphOp::AddType { ty, parent, slots } => {
            let slots: Vec<&str> = slots.iter().map(|s| SLOTS[*s]).collect();
            g.add_type(TYPES[*ty], parent.map(|p| TYPES[p]), &slots)?;
        }
        GraphOp::AddIs { child, parent } => {
            g.add_is(TYPES[*child], TYPES[*parent])?;
        }
        GraphOp::AddSlot {
            ty,
            slot,
            nested,
            default,
        } => {
            let t = g
                .find_type(TYPES[*ty])
                .ok_or_else(|| GraphError::UnknownType(TYPES[*ty].into()))?;
            let owner = match nested {
                None => t,
                Some(k) => {
                    let s = raw_slots(g, t);
                    if s.is_empty() {
                        t
                    } else {
                        s[k % s.len()].1
                    }
                }
            };
            let value = default.then(|| Value::text("unset"));
            g.add_slot(owner, SLOTS[*slot], value)?;
        }
        GraphOp::DefineAction {
            actor,
            action,
            object,
            skill,
        } => {
            g.define_action(TYPES[*actor], ACTIONS[*action], TYPES[*object], SKILLS[*skill])?;
        }
        GraphOp::Instantiate { ty, color, shape, at } => {
            let direct: BTreeSet<String> = raw_type(g, TYPES[*ty])
                .map(|t| raw_slots(g, t).into_iter().map(|(n, _)| n).collect())
                .unwrap_or_default();
            let mut values = Vec::new();
            if let Some(c) = color.filter(|_| direct.contains("color")) {
                values.push(PropertyValue::text("color", COLORS[c]));
            }
            if let Some(s) = shape.filter(|_| direct.contains("shape")) {
                values.push(PropertyValue::text("shape", SHAPES[s]));
            }
            return g.instantiate(TYPES[*ty], &values, pose_at(*at)).map(Applied::Instantiated);
        }
        GraphOp::Remove { pick } => {
            let live = live_instances(g);
            if live.is_empty() {
                return Err(GraphError::NotAnInstance(NodeId(u64::MAX)));
            }
            let id = live[pick % live.len()];
            let label = g.node(id).expect("live").label.clone();
            g.remove_instance(id)?;
            return Ok(Applied::Removed(label));
        }
        GraphOp::Move { pick, at } => {
            let live = live_instances(g);
            if live.is_empty() {
                return Err(GraphError::NotAnInstance(NodeId(u64::MAX)));
            }
            g.set_instance_pose(live[pick % live.len()], pose_at(*at))?;
        }
        GraphOp::ClearScene => {
            g.clear_scene();
        }
    }
    Ok(Applied::Other)
}

/// Structural invariants recomputed from the raw node and edge lists.
pub fn oracle_violations(g: &KnowledgeGraph) -> Vec<String> {
    let mut bad = Vec::new();
    let nodes: BTreeMap<NodeId, &Node> = g.nodes().map(|n| (n.id, n)).collect();
    let mut instance_of: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut has_parents: BTreeMap<NodeId, usize> = BTreeMap::new();
    let mut is_adj: BTreeMap<NodeId, Vec<NodeId>> = BTreeMap::new();

    for e in g.edges() {
        let (Some(s), Some(d)) = (nodes.get(&e.source), nodes.get(&e.dest)) else {
            bad.push(format!("edge {:?} has a dangling endpoint", e.id));
            continue;
        };
        match &e.kind {
            EdgeKind::InstanceOf => {
                if s.subgraph != Subgraph::Scene || s.kind != NodeKind::ObjectInstance {
                    bad.push(format!("instance-of from non-instance {}", s.label));
                }
                if d.subgraph != Subgraph::Prior || d.kind != NodeKind::TypeConcept {
                    bad.push(format!("instance-of into non-type {}", d.label));
                }
                *instance_of.entry(s.id).or_default() += 1;
            }
            other => {
                if s.subgraph != d.subgraph {
                    bad.push(format!("{} edge {} -> {} spans subgraphs", other.name(), s.label, d.label));
                }
                match other {
                    EdgeKind::Has => {
                        if d.kind != NodeKind::PropertySlot {
                            bad.push(format!("has edge into non-slot {}", d.label));
                        }
                        *has_parents.entry(d.id).or_default() += 1;
                    }
                    EdgeKind::Is => {
                        if s.kind != NodeKind::TypeConcept || d.kind != NodeKind::TypeConcept {
                            bad.push(format!("is edge {} -> {} between non-types", s.label, d.label));
                        }
                        is_adj.entry(s.id).or_default().push(d.id);
                    }
                    EdgeKind::Action { object, .. } => {
                        if s.kind != NodeKind::TypeConcept || d.kind != NodeKind::ActionImpl {
                            bad.push(format!("action edge {} -> {} has wrong endpoints", s.label, d.label));
                        }
                        if nodes.get(object).map(|o| o.kind) != Some(NodeKind::TypeConcept) {
                            bad.push(format!("action edge from {} qualified by a non-type", s.label));
                        }
                    }
                    EdgeKind::InstanceOf => unreachable!(),
                }
            }
        }
    }

    for n in nodes.values() {
        match n.kind {
            NodeKind::ObjectInstance => {
                if instance_of.get(&n.id) != Some(&1) {
                    bad.push(format!("instance {} lacks exactly one instance-of", n.label));
                }
                if n.subgraph != Subgraph::Scene {
                    bad.push(format!("instance {} outside the scene", n.label));
                }
            }
            NodeKind::PropertySlot => {
                if has_parents.get(&n.id) != Some(&1) {
                    bad.push(format!("slot {} lacks exactly one owner", n.label));
                }
            }
            NodeKind::TypeConcept | NodeKind::ActionImpl => {
                if n.subgraph != Subgraph::Prior {
                    bad.push(format!("{} must live in the prior graph", n.label));
                }
            }
        }
    }

    // Is-acyclicity by three-colour DFS.
    fn visit(
        n: NodeId,
        adj: &BTreeMap<NodeId, Vec<NodeId>>,
        colour: &mut BTreeMap<NodeId, u8>,
    ) -> bool {
        match colour.get(&n) {
            Some(1) => return false,
            Some(2) => return true,
            _ => {}
        }
        colour.insert(n, 1);
        for m in adj.get(&n).into_iter().flatten() {
            if !visit(*m, adj, colour) {
                return false;
            }
        }
        colour.insert(n, 2);
        true
    }
    let mut colour = BTreeMap::new();
    for n in is_adj.keys() {
        if !visit(*n, &is_adj, &mut colour) {
            bad.push("is hierarchy has a cycle".into());
            break;
        }
    }

    let mut type_names = BTreeSet::new();
    let mut scene_names = BTreeSet::new();
    for n in nodes.values() {
        if n.kind == NodeKind::TypeConcept && !type_names.insert(n.label.to_lowercase()) {
            bad.push(format!("duplicate type label {}", n.label));
        }
        if n.subgraph == Subgraph::Scene && !scene_names.insert(n.label.clone()) {
            bad.push(format!("duplicate scene label {}", n.label));
        }
    }

    // Instance labels are `<type>_<n>` with n within the type's counter.
    for e in g.edges().filter(|e| e.kind == EdgeKind::InstanceOf) {
        let (Some(inst), Some(ty)) = (nodes.get(&e.source), nodes.get(&e.dest)) else {
            continue;
        };
        let prefix = format!("{}_", ty.label.to_lowercase());
        let n = inst
            .label
            .strip_prefix(&prefix)
            .and_then(|s| s.parse::<u64>().ok());
        match n {
            Some(n) if n >= 1 && n <= g.counters().get(&ty.label).copied().unwrap_or(0) => {}
            _ => bad.push(format!("instance label {} does not fit type {}", inst.label, ty.label)),
        }
    }
    bad
}

/// Slot-name tree under `owner`, children sorted by name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct SlotTree(pub Vec<(String, SlotTree)>);

pub fn slot_tree(g: &KnowledgeGraph, owner: NodeId) -> SlotTree {
    SlotTree(
        raw_slots(g, owner)
            .into_iter()
            .map(|(name, id)| (name, slot_tree(g, id)))
            .collect(),
    )
}

fn prior_fingerprint(g: &KnowledgeGraph) -> (Vec<Node>, Vec<(NodeId, NodeId, EdgeKind)>) {
    let nodes = g.nodes().filter(|n| n.subgraph == Subgraph::Prior).cloned().collect();
    let mut edges: Vec<_> = g
        .edges()
        .filter(|e| g.node(e.source).is_some_and(|n| n.subgraph == Subgraph::Prior))
        .filter(|e| g.node(e.dest).is_some_and(|n| n.subgraph == Subgraph::Prior))
        .map(|e| (e.source, e.dest, e.kind.clone()))
        .collect();
    edges.sort();
    (nodes, edges)
}

/// Checks one transition `before --op--> after`.
pub fn check_step(
    before: &KnowledgeGraph,
    after: &KnowledgeGraph,
    op: &GraphOp,
    result: &Result<Applied, GraphError>,
) -> Result<(), String> {
    let applied = match result {
        Err(e) => {
            if before != after {
                return Err(format!("rejected {op:?} ({e}) still changed the graph"));
            }
            return Ok(());
        }
        Ok(a) => a,
    };
    let bad = oracle_violations(after);
    if !bad.is_empty() {
        return Err(format!("after {op:?}: {}", bad.join("; ")));
    }
    after
        .check_invariants()
        .map_err(|e| format!("after {op:?}: built-in checker disagrees: {e}"))?;
    for (ty, n) in before.counters() {
        if after.counters().get(ty).copied().unwrap_or(0) < *n {
            return Err(format!("counter for {ty} went backwards after {op:?}"));
        }
    }
    let scene_op = matches!(
        op,
        GraphOp::Instantiate { .. } | GraphOp::Remove { .. } | GraphOp::Move { .. } | GraphOp::ClearScene
    );
    if scene_op && prior_fingerprint(before) != prior_fingerprint(after) {
        return Err(format!("{op:?} changed the prior graph"));
    }
    match applied {
        Applied::Instantiated(id) => {
            let inst = after.node(*id).ok_or("instantiate returned a dead id")?;
            if before.nodes().any(|n| n.subgraph == Subgraph::Scene && n.label == inst.label) {
                return Err(format!("label {} reused", inst.label));
            }
            let ty = after
                .edges()
                .find(|e| e.source == *id && e.kind == EdgeKind::InstanceOf)
                .map(|e| e.dest)
                .ok_or("new instance has no type")?;
            let ty_label = &after.node(ty).expect("type").label;
            let expect_n = before.counters().get(ty_label).copied().unwrap_or(0) + 1;
            if inst.label != format!("{}_{expect_n}", ty_label.to_lowercase()) {
                return Err(format!("{} is not the next label for {ty_label}", inst.label));
            }
            if slot_tree(after, *id) != slot_tree(after, ty) {
                return Err(format!("{} is not an isomorphic copy of {ty_label}", inst.label));
            }
        }
        Applied::Removed(label) => {
            let prefix = format!("{label}.");
            if after
                .nodes()
                .any(|n| n.label == *label || n.label.starts_with(&prefix))
            {
                return Err(format!("{label} left nodes behind"));
            }
        }
        Applied::Other => {
            if matches!(op, GraphOp::ClearScene) && after.nodes().any(|n| n.subgraph == Subgraph::Scene) {
                return Err("clear_scene left scene nodes".into());
            }
        }
    }
    Ok(())
}

/// Scene instances of `ty` or a subtype whose direct slots satisfy every
/// text filter, sorted by label. Brute force over the raw lists.
pub fn oracle_query(g: &KnowledgeGraph, ty: &str, filters: &[(&str, &str)]) -> Vec<String> {
    let Some(root) = raw_type(g, ty) else {
        return Vec::new();
    };
    let mut closure = BTreeSet::from([root]);
    loop {
        let grown: Vec<NodeId> = g
            .edges()
            .filter(|e| e.kind == EdgeKind::Is && closure.contains(&e.dest) && !closure.contains(&e.source))
            .map(|e| e.source)
            .collect();
        if grown.is_empty() {
            break;
        }
        closure.extend(grown);
    }
    let mut out: Vec<String> = g
        .edges()
        .filter(|e| e.kind == EdgeKind::InstanceOf && closure.contains(&e.dest))
        .filter(|e| {
            let slots = raw_slots(g, e.source);
            filters.iter().all(|(slot, want)| {
                slots.iter().any(|(name, id)| {
                    name == slot
                        && matches!(&g.node(*id).expect("slot").value,
                            Some(Value::Text(v)) if v.trim().eq_ignore_ascii_case(want))
                })
            })
        })
        .map(|e| g.node(e.source).expect("instance").label.clone())
        .collect();
    out.sort();
    out
}

/// Filter monotonicity and agreement with [`oracle_query`] for every
/// type and every chain `[] ⊇ [color] ⊇ [color, shape]`.
pub fn check_queries(g: &KnowledgeGraph) -> Result<(), String> {
    let labels = |ids: Vec<NodeId>| -> Vec<String> {
        let mut v: Vec<String> = ids.into_iter().map(|id| g.node(id).expect("live").label.clone()).collect();
        v.sort();
        v
    };
    for ty in TYPES {
        if raw_type(g, ty).is_none() {
            continue;
        }
        let all = labels(g.query_instances(ty, &[]).map_err(|e| e.to_string())?);
        if all != oracle_query(g, ty, &[]) {
            return Err(format!("query {ty} [] disagrees with the oracle"));
        }
        for c in COLORS {
            let f1 = [PropertyValue::text("color", c)];
            let one = labels(g.query_instances(ty, &f1).map_err(|e| e.to_string())?);
            if one != oracle_query(g, ty, &[("color", c)]) {
                return Err(format!("query {ty} [color={c}] disagrees with the oracle"));
            }
            if !one.iter().all(|l| all.contains(l)) {
                return Err(format!("adding color={c} grew the result for {ty}"));
            }
            for s in SHAPES {
                let f2 = [PropertyValue::text("color", c), PropertyValue::text("shape", s)];
                let two = labels(g.query_instances(ty, &f2).map_err(|e| e.to_string())?);
                if two != oracle_query(g, ty, &[("color", c), ("shape", s)]) {
                    return Err(format!("query {ty} [color={c}, shape={s}] disagrees with the oracle"));
                }
                if !two.iter().all(|l| one.contains(l)) {
                    return Err(format!("adding shape={s} grew the result for {ty}"));
                }
            }
        }
    }
    Ok(())
}

/// Runs `ops` from `start`, checking every step. Returns the final graph.
pub fn run_ops(start: &KnowledgeGraph, ops: &[GraphOp]) -> Result<KnowledgeGraph, String> {
    let mut g = start.clone();
    for op in ops {
        let before = g.clone();
        let result = apply(&mut g, op);
        check_step(&before, &g, op, &result)?;
    }
    check_queries(&g)?;
    Ok(g)
}

/// Canonical, id-free description of a graph: a node is named by its
/// label, prior slots by their owner path. Two graphs are isomorphic in
/// the sense that matters here iff their canonical forms are equal.
pub fn canonical_form(g: &KnowledgeGraph) -> BTreeSet<String> {
    fn name(g: &KnowledgeGraph, id: NodeId) -> String {
        let n = g.node(id).expect("live node");
        match (n.kind, n.subgraph) {
            (NodeKind::TypeConcept, _) => format!("T:{}", n.label),
            (NodeKind::ActionImpl, _) => format!("A:{}", n.label),
            (_, Subgraph::Scene) => format!("S:{}", n.label),
            (NodeKind::PropertySlot, Subgraph::Prior) => {
                let owner = g
                    .edges()
                    .find(|e| e.dest == id && e.kind == EdgeKind::Has)
                    .map(|e| e.source)
                    .expect("slot owner");
                format!("{}/{}", name(g, owner), n.label)
            }
            (NodeKind::ObjectInstance, Subgraph::Prior) => format!("?:{}", n.label),
        }
    }
    let mut out = BTreeSet::new();
    for n in g.nodes() {
        out.insert(format!(
            "node {} value={} skill={}",
            name(g, n.id),
            serde_json::to_string(&n.value).expect("value"),
            n.skill_ref.as_deref().unwrap_or("-")
        ));
    }
    for e in g.edges() {
        let kind = match &e.kind {
            EdgeKind::Action { label, object } => format!("action:{label}@{}", name(g, *object)),
            k => k.name().to_string(),
        };
        out.insert(format!("edge {} -{kind}-> {}", name(g, e.source), name(g, e.dest)));
    }
    for (ty, n) in g.counters() {
        out.insert(format!("counter {ty}={n}"));
    }
    out
}

// ---- worlds for persistence -------------------------------------------

pub fn arb_signature() -> impl Strategy<Value = Signature> {
    (
        prop::sample::select(vec!["hexagonal", "square", "round", "big"]),
        prop::sample::select(COLORS.to_vec()),
        prop::array::uniform3(prop::sample::select(vec![2.0, 4.0, 6.0, 10.0, 20.0, 40.0])),
        prop::option::of(0..6usize),
    )
        .prop_map(|(shape, color, size, d)| {
            let s = Signature::new(shape, color, size);
            match d {
                Some(k) => s.with_descriptor(one_hot(k)),
                None => s,
            }
        })
}

/// A seed-like world grown by random ops, with extra signatures and skills.
pub fn arb_world() -> impl Strategy<Value = World> {
    (
        arb_ops(40),
        prop::collection::vec((0..TYPES.len(), arb_signature()), 0..6),
        prop::collection::vec((0..SKILLS.len(), 0..4usize), 0..4),
    )
        .prop_map(|(ops, sigs, skills)| {
            let mut world = World::default();
            for op in &ops {
                let _ = apply(&mut world.graph, op);
            }
            for (ty, sig) in sigs {
                let _ = world.signatures.register(&world.graph, TYPES[ty], sig);
            }
            for (name, n) in skills {
                let steps = [Step::GripClose, Step::GripOpen, Step::RemovePatient]
                    .into_iter()
                    .cycle()
                    .take(n)
                    .collect();
                let _ = world.skills.register(Skill {
                    name: SKILLS[name].to_string(),
                    steps,
                });
            }
            world
        })
}

// ---- perception oracle -------------------------------------------------

/// Reference distance written out from the definition: weighted 0/1
/// shape and colour mismatch, relative size distance and half the
/// descriptor distance when both sides carry one.
pub fn oracle_distance(a: &Signature, b: &Signature) -> f64 {
    let differ = |x: &str, y: &str| x.trim().to_lowercase() != y.trim().to_lowercase();
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = (0..3).map(|i| a.size[i] - b.size[i]).collect();
    let size_term = norm(&diff) / (norm(&a.size) + norm(&b.size));
    let desc_term = match (&a.descriptor, &b.descriptor) {
        (Some(x), Some(y)) => {
            let d: Vec<f64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
            norm(&d) / 2.0
        }
        _ => 0.0,
    };
    let mut d = 0.0;
    if differ(&a.shape, &b.shape) {
        d += 0.4;
    }
    if differ(&a.color, &b.color) {
        d += 0.2;
    }
    d + 0.2 * size_term + 0.2 * desc_term
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleVerdict {
    pub nearest: Option<String>,
    pub distance: f64,
    pub matched: bool,
    /// Distinct labels sharing the minimum distance.
    pub tied_labels: usize,
}

/// Brute-force nearest neighbour: sort every (distance, label) pair,
/// treat distances within `1e-12` as tied and pick the smallest label.
pub fn oracle_classify(db: &[ReferenceSignature], obs: &Signature, threshold: f64) -> OracleVerdict {
    let mut scored: Vec<(f64, &str)> = db
        .iter()
        .map(|r| (oracle_distance(obs, &r.signature), r.type_label.as_str()))
        .collect();
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let Some(&(best, _)) = scored.first() else {
        return OracleVerdict {
            nearest: None,
            distance: f64::INFINITY,
            matched: false,
            tied_labels: 0,
        };
    };
    let tied: BTreeSet<&str> = scored
        .iter()
        .filter(|(d, _)| *d <= best + 1e-12)
        .map(|(_, l)| *l)
        .collect();
    OracleVerdict {
        nearest: tied.first().map(|l| l.to_string()),
        distance: best,
        matched: best <= threshold + 1e-12,
        tied_labels: tied.len(),
    }
}

/// Reference entries drawn from a coarse grid so exact ties happen often.
pub fn arb_reference_db(len: usize) -> impl Strategy<Value = Vec<ReferenceSignature>> {
    prop::collection::vec((0..10usize, arb_signature()), len).prop_map(|v| {
        v.into_iter()
            .map(|(t, signature)| ReferenceSignature {
                type_label: format!("T{t}"),
                signature,
            })
            .collect()
    })
}

/// A database where the last `dupes` entries repeat earlier signatures
/// under other labels, so exact ties are guaranteed.
pub fn arb_tied_db(len: usize, dupes: usize) -> impl Strategy<Value = Vec<ReferenceSignature>> {
    (
        arb_reference_db(len - dupes),
        prop::collection::vec((any::<usize>(), 0..10usize), dupes),
    )
        .prop_map(move |(mut db, picks)| {
            let base = db.len();
            for (i, t) in picks {
                let signature = db[i % base].signature.clone();
                db.push(ReferenceSignature {
                    type_label: format!("T{t}"),
                    signature,
                });
            }
            db
        })
}

/// Observations: fresh grid signatures, off-grid blends, and exact copies
/// of database entries (`Err(index)`, resolved by the caller).
pub fn arb_observation() -> impl Strategy<Value = Result<Signature, usize>> {
    prop_oneof![
        2 => arb_signature().prop_map(Ok),
        1 => (arb_signature(), 0..16usize, 0..16usize)
            .prop_map(|(s, i, j)| Ok(s.with_descriptor(blended_descriptor(i, j)))),
        1 => any::<usize>().prop_map(Err),
    ]
}

/// Unit descriptor halfway between two axes, for off-grid observations.
pub fn blended_descriptor(i: usize, j: usize) -> Vec<f64> {
    let mut v = [0.0; DESCRIPTOR_DIM];
    v[i % DESCRIPTOR_DIM] += 1.0;
    v[j % DESCRIPTOR_DIM] += 1.0;
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter().map(|x| x / n).collect()
}

// ---- parser corpus -------------------------------------------------------

/// One template sentence and the frame it must parse to.
#[derive(Debug, Clone)]
pub struct CorpusEntry {
    pub text: String,
    pub expected: IntentFrame,
}

/// Every combination of actor, verb, determiner, modifier set and noun in
/// the `Actor, verb det mods noun!` template.
pub fn parser_corpus() -> Vec<CorpusEntry> {
    let actors = ["YuMi", "robot", "Baxter"];
    let verbs = ["pick", "place", "test", "grab", "lift", "move", "inspect", "drop"];
    let dets = [("the ", Determiner::Definite), ("a ", Determiner::Indefinite), ("", Determiner::None)];
    let mods: [&[(&str, &str)]; 5] = [
        &[],
        &[("color", "green")],
        &[("shape", "big")],
        &[("color", "blue"), ("shape", "small")],
        &[("shape", "square"), ("color", "gray")],
    ];
    let nouns = ["nut", "screw", "box", "clip", "gear"];
    let mut out = Vec::new();
    for actor in actors {
        for verb in verbs {
            for (det, determiner) in dets {
                for m in mods {
                    for noun in nouns {
                        let words: Vec<&str> = m.iter().map(|(_, w)| *w).collect();
                        let mut phrase = words.join(" ");
                        if !phrase.is_empty() {
                            phrase.push(' ');
                        }
                        let text = format!("{actor}, {verb} {det}{phrase}{noun}!");
                        let expected = IntentFrame {
                            actor: actor.to_lowercase(),
                            action: verb.to_string(),
                            patient: ObjectDescriptor {
                                type_word: noun.to_string(),
                                modifiers: m.iter().map(|(s, w)| PropertyValue::text(*s, *w)).collect(),
                                determiner,
                            },
                            raw: text.clone(),
                        };
                        out.push(CorpusEntry { text, expected });
                    }
                }
            }
        }
    }
    out
}
