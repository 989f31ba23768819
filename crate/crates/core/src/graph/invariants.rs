use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{instance_label, EdgeKind, KnowledgeGraph, NodeId, NodeKind, Subgraph};

/// A structural rule of the dual graph that does not hold.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("graph invariant violated: {0}")]
pub struct InvariantViolation(pub String);

impl InvariantViolation {
    pub fn new(msg: impl Into<String>) -> Self {
        Self(msg.into())
    }
}

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(InvariantViolation(format!($($fmt)+)));
        }
    };
}

impl KnowledgeGraph {
    /// Full scan of every structural rule. Cheap enough to run after each
    /// mutation in tests and on every load.
    pub fn check_invariants(&self) -> Result<(), InvariantViolation> {
        self.check_nodes()?;
        self.check_edges()?;
        self.check_instances()?;
        self.check_has_forest()?;
        self.check_is_acyclic()?;
        self.check_indexes()
    }

    fn check_nodes(&self) -> Result<(), InvariantViolation> {
        for (id, n) in &self.nodes {
            ensure!(*id == n.id, "node keyed {id} carries id {}", n.id);
            ensure!(id.0 < self.next_node, "node {id} not below allocator {}", self.next_node);
            ensure!(!n.label.is_empty(), "node {id} has an empty label");
            match n.kind {
                NodeKind::TypeConcept => {
                    ensure!(n.subgraph == Subgraph::Prior, "type `{}` outside prior subgraph", n.label);
                    ensure!(n.skill_ref.is_none(), "type `{}` carries a skill", n.label);
                }
                NodeKind::ObjectInstance => {
                    ensure!(n.subgraph == Subgraph::Scene, "instance `{}` outside scene subgraph", n.label);
                    ensure!(n.skill_ref.is_none(), "instance `{}` carries a skill", n.label);
                }
                NodeKind::PropertySlot => {
                    ensure!(n.skill_ref.is_none(), "slot `{}` carries a skill", n.label);
                }
                NodeKind::ActionImpl => {
                    ensure!(n.subgraph == Subgraph::Prior, "action impl `{}` outside prior subgraph", n.label);
                    ensure!(
                        n.skill_ref.as_deref().is_some_and(|s| !s.is_empty()),
                        "action impl `{}` has no skill",
                        n.label
                    );
                    ensure!(n.value.is_none(), "action impl `{}` has both value and skill", n.label);
                }
            }
        }
        Ok(())
    }

    fn check_edges(&self) -> Result<(), InvariantViolation> {
        for (id, e) in &self.edges {
            ensure!(*id == e.id, "edge keyed {id} carries id {}", e.id);
            ensure!(id.0 < self.next_edge, "edge {id} not below allocator {}", self.next_edge);
            let (Some(s), Some(d)) = (self.nodes.get(&e.source), self.nodes.get(&e.dest)) else {
                return Err(InvariantViolation(format!("edge {id} has a dangling endpoint")));
            };
            let spans = s.subgraph == Subgraph::Scene && d.subgraph == Subgraph::Prior;
            ensure!(
                (e.kind == EdgeKind::InstanceOf) == spans,
                "edge {id} ({}) breaks the instance-of spanning rule",
                e.kind.name()
            );
            if e.kind != EdgeKind::InstanceOf {
                ensure!(s.subgraph == d.subgraph, "edge {id} crosses subgraphs");
            }
            match &e.kind {
                EdgeKind::Has => {
                    ensure!(d.kind == NodeKind::PropertySlot, "has edge {id} targets a non-slot");
                    ensure!(s.kind != NodeKind::ActionImpl, "has edge {id} from an action impl");
                }
                EdgeKind::Is => {
                    ensure!(
                        s.kind == NodeKind::TypeConcept && d.kind == NodeKind::TypeConcept,
                        "is edge {id} between non-types"
                    );
                }
                EdgeKind::InstanceOf => {
                    ensure!(
                        s.kind == NodeKind::ObjectInstance && d.kind == NodeKind::TypeConcept,
                        "instance-of edge {id} must run instance -> type"
                    );
                }
                EdgeKind::Action { label, object } => {
                    ensure!(!label.is_empty(), "action edge {id} has an empty label");
                    ensure!(
                        matches!(s.kind, NodeKind::TypeConcept | NodeKind::ObjectInstance),
                        "action edge {id} source is not an actor"
                    );
                    ensure!(d.kind == NodeKind::ActionImpl, "action edge {id} target is not an impl");
                    ensure!(
                        self.nodes.get(object).is_some_and(|o| o.kind == NodeKind::TypeConcept),
                        "action edge {id} object is not a type"
                    );
                }
            }
        }
        Ok(())
    }

    fn check_instances(&self) -> Result<(), InvariantViolation> {
        let mut scene_labels = BTreeSet::new();
        let mut type_labels = BTreeSet::new();
        for n in self.nodes.values() {
            if n.subgraph == Subgraph::Scene {
                ensure!(scene_labels.insert(&n.label), "scene label `{}` is not unique", n.label);
            }
            if n.kind == NodeKind::TypeConcept {
                ensure!(
                    type_labels.insert(n.label.to_lowercase()),
                    "type label `{}` is not unique",
                    n.label
                );
            }
            if n.kind != NodeKind::ObjectInstance {
                continue;
            }
            let classes: Vec<NodeId> = self
                .outgoing(n.id)
                .filter(|e| e.kind == EdgeKind::InstanceOf)
                .map(|e| e.dest)
                .collect();
            ensure!(classes.len() == 1, "instance `{}` has {} instance-of edges", n.label, classes.len());
            let ty = &self.nodes[&classes[0]].label;
            let counter = self.counters.get(ty).copied().unwrap_or(0);
            let prefix = format!("{}_", ty.to_lowercase());
            let valid = n
                .label
                .strip_prefix(&prefix)
                .and_then(|r| r.parse::<u64>().ok())
                .is_some_and(|k| (1..=counter).contains(&k) && instance_label(ty, k) == n.label);
            ensure!(valid, "instance `{}` is not `<{ty}>_n` with n <= {counter}", n.label);
        }
        for ty in self.counters.keys() {
            ensure!(
                self.find_type(ty).is_some_and(|id| self.nodes[&id].label == *ty),
                "counter for unknown type `{ty}`"
            );
        }
        Ok(())
    }

    /// Every slot has exactly one owner, owners chain up to a non-slot, and
    /// scene copies are labelled `<owner>.<slot>`.
    fn check_has_forest(&self) -> Result<(), InvariantViolation> {
        let mut owner: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for e in self.edges.values().filter(|e| e.kind == EdgeKind::Has) {
            ensure!(owner.insert(e.dest, e.source).is_none(), "slot {} has several owners", e.dest);
        }
        for n in self.nodes.values().filter(|n| n.kind == NodeKind::PropertySlot) {
            let Some(parent) = owner.get(&n.id) else {
                return Err(InvariantViolation(format!("slot `{}` has no owner", n.label)));
            };
            if n.subgraph == Subgraph::Scene {
                let p = &self.nodes[parent];
                ensure!(
                    n.label.strip_prefix(p.label.as_str()).and_then(|r| r.strip_prefix('.')).is_some_and(|r| !r.contains('.')),
                    "scene slot `{}` not labelled under owner `{}`",
                    n.label,
                    p.label
                );
            }
            let mut cur = n.id;
            let mut steps = 0;
            while let Some(p) = owner.get(&cur) {
                cur = *p;
                steps += 1;
                ensure!(steps <= self.nodes.len(), "has cycle through `{}`", n.label);
            }
        }
        Ok(())
    }

    fn check_is_acyclic(&self) -> Result<(), InvariantViolation> {
        let is_edges: Vec<_> = self.edges.values().filter(|e| e.kind == EdgeKind::Is).collect();
        let mut indeg: BTreeMap<NodeId, usize> = BTreeMap::new();
        for e in &is_edges {
            indeg.entry(e.source).or_default();
            *indeg.entry(e.dest).or_default() += 1;
        }
        let mut ready: Vec<NodeId> = indeg.iter().filter(|(_, d)| **d == 0).map(|(n, _)| *n).collect();
        let mut seen = 0;
        while let Some(n) = ready.pop() {
            seen += 1;
            for e in is_edges.iter().filter(|e| e.source == n) {
                let d = indeg.get_mut(&e.dest).expect("counted");
                *d -= 1;
                if *d == 0 {
                    ready.push(e.dest);
                }
            }
        }
        ensure!(seen == indeg.len(), "the is hierarchy contains a cycle");
        Ok(())
    }

    fn check_indexes(&self) -> Result<(), InvariantViolation> {
        for (id, e) in &self.edges {
            ensure!(
                self.out_edges.get(&e.source).is_some_and(|s| s.contains(id))
                    && self.in_edges.get(&e.dest).is_some_and(|s| s.contains(id)),
                "adjacency index missing edge {id}"
            );
        }
        let indexed: usize = self.out_edges.values().map(BTreeSet::len).sum();
        ensure!(indexed == self.edges.len(), "adjacency index holds stale edges");
        for (label, id) in &self.type_index {
            ensure!(
                self.nodes.get(id).is_some_and(|n| n.label.to_lowercase() == *label),
                "type index stale for `{label}`"
            );
        }
        for (label, id) in &self.scene_index {
            ensure!(
                self.nodes.get(id).is_some_and(|n| n.label == *label),
                "scene index stale for `{label}`"
            );
        }
        Ok(())
    }
}
