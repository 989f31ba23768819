//! Dual knowledge graph: a prior subgraph of type concepts, property slots and
//! action implementations, and a scene subgraph of observed object instances.
//!
//! The only edge allowed to cross the two halves is `instance-of`, from a
//! scene instance to its prior type. Instantiating a type copies the type's
//! `has` structure into the scene and names the new node
//! `<type>_<n>` from a per-type counter that never goes backwards.

mod invariants;
mod types;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use invariants::InvariantViolation;
pub use types::{
    wrap_degrees, Edge, EdgeId, EdgeKind, Node, NodeId, NodeKind, Pose, PropertyValue, Subgraph,
    Value,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("type `{0}` already exists")]
    DuplicateType(String),
    #[error("unknown parent type `{0}`")]
    UnknownParent(String),
    #[error("`{child}` is-a `{parent}` would create a cycle in the type hierarchy")]
    HierarchyCycle { child: String, parent: String },
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("type `{type_label}` has no slot `{slot}`")]
    UnknownSlot { type_label: String, slot: String },
    #[error("duplicate slot `{slot}` on `{owner}`")]
    DuplicateSlot { owner: String, slot: String },
    #[error("{0} is not a live scene instance")]
    NotAnInstance(NodeId),
    #[error("{0} cannot own property slots")]
    NotASlotOwner(NodeId),
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
    #[error("action `{action}` from `{actor}` on `{object}` is already bound to `{existing}`")]
    ActionConflict {
        actor: String,
        action: String,
        object: String,
        existing: String,
    },
    #[error("pose must be finite")]
    InvalidPose,
}

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

/// Exact action implementation found for (actor, action, object).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionMatch {
    pub edge: EdgeId,
    pub impl_node: NodeId,
    pub skill_ref: String,
    /// Actor type the edge hangs off (may be a supertype of the query).
    pub actor_type: String,
    /// Object type the edge is registered for (may be a supertype).
    pub object_type: String,
}

/// Same action label registered for a different object type.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct NearMiss {
    pub action: String,
    pub object_type: String,
    pub skill_ref: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionLookup {
    Exact(ActionMatch),
    NearMisses(Vec<NearMiss>),
}

/// Flat, index-free form of a graph used for persistence.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GraphParts {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub counters: BTreeMap<String, u64>,
    pub next_node_id: u64,
    pub next_edge_id: u64,
}

#[derive(Debug, Clone, Default)]
pub struct KnowledgeGraph {
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<EdgeId, Edge>,
    out_edges: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    in_edges: BTreeMap<NodeId, BTreeSet<EdgeId>>,
    /// Lowercased type label -> type node.
    type_index: BTreeMap<String, NodeId>,
    /// Scene label -> scene node.
    scene_index: BTreeMap<String, NodeId>,
    counters: BTreeMap<String, u64>,
    next_node: u64,
    next_edge: u64,
}

/// Equality is over content only; the adjacency and label indexes are
/// derived and may hold empty entries after removals.
impl PartialEq for KnowledgeGraph {
    fn eq(&self, other: &Self) -> bool {
        self.nodes == other.nodes
            && self.edges == other.edges
            && self.counters == other.counters
            && self.next_node == other.next_node
            && self.next_edge == other.next_edge
    }
}

fn validate_label(label: &str) -> Result<()> {
    let ok = !label.is_empty()
        && label.trim() == label
        && !label.contains('.')
        && !label.chars().any(|c| c.is_whitespace() || c.is_control());
    if ok {
        Ok(())
    } else {
        Err(GraphError::InvalidLabel(label.to_string()))
    }
}

/// Scene label for the `n`th instance of `type_label`.
pub fn instance_label(type_label: &str, n: u64) -> String {
    format!("{}_{}", type_label.to_lowercase(), n)
}

impl KnowledgeGraph {
    pub fn new() -> Self {
        Self::default()
    }

    // ---- read access -------------------------------------------------

    pub fn node(&self, id: NodeId) -> Option<&Node> {
        self.nodes.get(&id)
    }

    pub fn edge(&self, id: EdgeId) -> Option<&Edge> {
        self.edges.get(&id)
    }

    pub fn nodes(&self) -> impl Iterator<Item = &Node> {
        self.nodes.values()
    }

    pub fn edges(&self) -> impl Iterator<Item = &Edge> {
        self.edges.values()
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn counters(&self) -> &BTreeMap<String, u64> {
        &self.counters
    }

    pub fn counter(&self, type_label: &str) -> u64 {
        self.find_type(type_label)
            .and_then(|id| self.counters.get(&self.nodes[&id].label))
            .copied()
            .unwrap_or(0)
    }

    pub fn outgoing(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.out_edges
            .get(&id)
            .into_iter()
            .flatten()
            .map(|e| &self.edges[e])
    }

    pub fn incoming(&self, id: NodeId) -> impl Iterator<Item = &Edge> {
        self.in_edges
            .get(&id)
            .into_iter()
            .flatten()
            .map(|e| &self.edges[e])
    }

    /// Case-insensitive type lookup.
    pub fn find_type(&self, label: &str) -> Option<NodeId> {
        self.type_index.get(&label.trim().to_lowercase()).copied()
    }

    pub fn type_label(&self, id: NodeId) -> Option<&str> {
        self.nodes
            .get(&id)
            .filter(|n| n.kind == NodeKind::TypeConcept)
            .map(|n| n.label.as_str())
    }

    pub fn type_labels(&self) -> Vec<String> {
        let mut v: Vec<String> = self
            .type_index
            .values()
            .map(|id| self.nodes[id].label.clone())
            .collect();
        v.sort();
        v
    }

    pub fn scene_node(&self, label: &str) -> Option<NodeId> {
        self.scene_index.get(label).copied()
    }

    pub fn is_live_instance(&self, id: NodeId) -> bool {
        self.nodes
            .get(&id)
            .is_some_and(|n| n.kind == NodeKind::ObjectInstance)
    }

    /// All live instances, ordered by (instance number, label).
    pub fn instances(&self) -> Vec<NodeId> {
        let mut v: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.kind == NodeKind::ObjectInstance)
            .map(|n| n.id)
            .collect();
        self.sort_instances(&mut v);
        v
    }

    /// Type node an instance is classified as.
    pub fn instance_type(&self, id: NodeId) -> Option<NodeId> {
        self.outgoing(id)
            .find(|e| e.kind == EdgeKind::InstanceOf)
            .map(|e| e.dest)
    }

    /// Instance number parsed from the `<type>_<n>` label.
    pub fn instance_number(&self, id: NodeId) -> Option<u64> {
        let node = self.nodes.get(&id)?;
        node.label.rsplit('_').next()?.parse().ok()
    }

    /// Direct property slots of a node, as (slot name, node id).
    pub fn slots(&self, owner: NodeId) -> Vec<(String, NodeId)> {
        self.outgoing(owner)
            .filter(|e| e.kind == EdgeKind::Has)
            .map(|e| (self.nodes[&e.dest].slot_name().to_string(), e.dest))
            .collect()
    }

    pub fn slot_value(&self, owner: NodeId, slot: &str) -> Option<&Value> {
        self.slots(owner)
            .into_iter()
            .find(|(name, _)| name == slot)
            .and_then(|(_, id)| self.nodes[&id].value.as_ref())
    }

    /// Sorted relative paths (`color`, `position.x`, ...) of every slot
    /// reachable from `owner` through `has` edges.
    pub fn has_profile(&self, owner: NodeId) -> Vec<String> {
        let mut out = Vec::new();
        let mut stack = vec![(owner, String::new())];
        while let Some((id, prefix)) = stack.pop() {
            for (name, child) in self.slots(id) {
                let path = if prefix.is_empty() {
                    name
                } else {
                    format!("{prefix}.{name}")
                };
                out.push(path.clone());
                stack.push((child, path));
            }
        }
        out.sort();
        out
    }

    /// Supertypes of `ty` including itself, nearest first (BFS over `is`,
    /// ties broken by label).
    pub fn ancestors(&self, ty: NodeId) -> Vec<NodeId> {
        self.walk_is(ty, |g, id| {
            g.outgoing(id)
                .filter(|e| e.kind == EdgeKind::Is)
                .map(|e| e.dest)
                .collect()
        })
    }

    /// Subtypes of `ty` including itself (BFS over reversed `is`).
    pub fn descendants(&self, ty: NodeId) -> Vec<NodeId> {
        self.walk_is(ty, |g, id| {
            g.incoming(id)
                .filter(|e| e.kind == EdgeKind::Is)
                .map(|e| e.source)
                .collect()
        })
    }

    fn walk_is(&self, start: NodeId, next: impl Fn(&Self, NodeId) -> Vec<NodeId>) -> Vec<NodeId> {
        let mut seen = BTreeSet::from([start]);
        let mut order = vec![start];
        let mut frontier = vec![start];
        while !frontier.is_empty() {
            let mut layer: Vec<NodeId> = frontier
                .iter()
                .flat_map(|&id| next(self, id))
                .filter(|id| seen.insert(*id))
                .collect();
            layer.sort_by(|a, b| self.nodes[a].label.cmp(&self.nodes[b].label));
            order.extend(&layer);
            frontier = layer;
        }
        order
    }

    /// `label` plus every subtype, sorted lexicographically.
    pub fn type_closure(&self, label: &str) -> Result<Vec<String>> {
        let ty = self
            .find_type(label)
            .ok_or_else(|| GraphError::UnknownType(label.to_string()))?;
        let mut labels: Vec<String> = self
            .descendants(ty)
            .into_iter()
            .map(|id| self.nodes[&id].label.clone())
            .collect();
        labels.sort();
        Ok(labels)
    }

    /// Whether a live instance satisfies every filter on its direct slots.
    pub fn instance_matches(&self, id: NodeId, filters: &[PropertyValue]) -> bool {
        filters.iter().all(|f| {
            self.slot_value(id, &f.slot)
                .is_some_and(|v| v.satisfies(&f.value))
        })
    }

    /// Scene instances of `type_label` or any subtype that satisfy all
    /// `filters`, ordered by instance number.
    pub fn query_instances(&self, type_label: &str, filters: &[PropertyValue]) -> Result<Vec<NodeId>> {
        let ty = self
            .find_type(type_label)
            .ok_or_else(|| GraphError::UnknownType(type_label.to_string()))?;
        let closure: BTreeSet<NodeId> = self.descendants(ty).into_iter().collect();
        let mut hits: Vec<NodeId> = closure
            .iter()
            .flat_map(|t| self.incoming(*t))
            .filter(|e| e.kind == EdgeKind::InstanceOf)
            .map(|e| e.source)
            .filter(|id| self.instance_matches(*id, filters))
            .collect();
        self.sort_instances(&mut hits);
        Ok(hits)
    }

    fn sort_instances(&self, ids: &mut [NodeId]) {
        ids.sort_by(|a, b| {
            let ka = (self.instance_number(*a), &self.nodes[a].label);
            let kb = (self.instance_number(*b), &self.nodes[b].label);
            ka.cmp(&kb)
        });
    }

    /// Finds the implementation for `actor_type --action--> object_type`.
    ///
    /// Both supertype chains are searched nearest-first; the object chain is
    /// the outer loop so a more specific object binding wins. When nothing
    /// matches, the same action label bound to other object types is
    /// returned, sorted by object type label.
    pub fn lookup_action(&self, actor_type: &str, action: &str, object_type: &str) -> Result<ActionLookup> {
        let actor = self
            .find_type(actor_type)
            .ok_or_else(|| GraphError::UnknownType(actor_type.to_string()))?;
        let actor_chain = self.ancestors(actor);
        let object_chain = self
            .find_type(object_type)
            .map(|o| self.ancestors(o))
            .unwrap_or_default();

        for &object in &object_chain {
            for &a in &actor_chain {
                let hit = self.outgoing(a).find(|e| match &e.kind {
                    EdgeKind::Action { label, object: o } => {
                        *o == object && label.eq_ignore_ascii_case(action)
                    }
                    _ => false,
                });
                if let Some(edge) = hit {
                    let imp = &self.nodes[&edge.dest];
                    return Ok(ActionLookup::Exact(ActionMatch {
                        edge: edge.id,
                        impl_node: imp.id,
                        skill_ref: imp.skill_ref.clone().unwrap_or_default(),
                        actor_type: self.nodes[&a].label.clone(),
                        object_type: self.nodes[&object].label.clone(),
                    }));
                }
            }
        }

        let excluded: BTreeSet<NodeId> = object_chain.into_iter().collect();
        let mut near: BTreeMap<String, NearMiss> = BTreeMap::new();
        for &a in &actor_chain {
            for edge in self.outgoing(a) {
                if let EdgeKind::Action { label, object } = &edge.kind {
                    if !label.eq_ignore_ascii_case(action) || excluded.contains(object) {
                        continue;
                    }
                    let object_label = self.nodes[object].label.clone();
                    near.entry(object_label.clone()).or_insert_with(|| NearMiss {
                        action: label.clone(),
                        object_type: object_label,
                        skill_ref: self.nodes[&edge.dest].skill_ref.clone().unwrap_or_default(),
                    });
                }
            }
        }
        Ok(ActionLookup::NearMisses(near.into_values().collect()))
    }

    // ---- mutation ----------------------------------------------------

    fn alloc_node(&mut self, label: String, subgraph: Subgraph, kind: NodeKind) -> NodeId {
        let id = NodeId(self.next_node);
        self.next_node += 1;
        match kind {
            NodeKind::TypeConcept => {
                self.type_index.insert(label.to_lowercase(), id);
            }
            _ if subgraph == Subgraph::Scene => {
                self.scene_index.insert(label.clone(), id);
            }
            _ => {}
        }
        self.nodes.insert(
            id,
            Node {
                id,
                label,
                subgraph,
                kind,
                value: None,
                skill_ref: None,
            },
        );
        id
    }

    fn alloc_edge(&mut self, source: NodeId, dest: NodeId, kind: EdgeKind) -> EdgeId {
        let id = EdgeId(self.next_edge);
        self.next_edge += 1;
        self.edges.insert(id, Edge { id, source, dest, kind });
        self.out_edges.entry(source).or_default().insert(id);
        self.in_edges.entry(dest).or_default().insert(id);
        id
    }

    fn drop_edge(&mut self, id: EdgeId) {
        if let Some(e) = self.edges.remove(&id) {
            if let Some(s) = self.out_edges.get_mut(&e.source) {
                s.remove(&id);
            }
            if let Some(s) = self.in_edges.get_mut(&e.dest) {
                s.remove(&id);
            }
        }
    }

    fn drop_node(&mut self, id: NodeId) {
        let incident: Vec<EdgeId> = self
            .out_edges
            .remove(&id)
            .into_iter()
            .chain(self.in_edges.remove(&id))
            .flatten()
            .collect();
        for e in incident {
            self.drop_edge(e);
        }
        if let Some(n) = self.nodes.remove(&id) {
            if n.kind == NodeKind::TypeConcept {
                self.type_index.remove(&n.label.to_lowercase());
            } else if n.subgraph == Subgraph::Scene {
                self.scene_index.remove(&n.label);
            }
        }
    }

    /// Adds a type concept with an optional parent and direct property slots.
    pub fn add_type<S: AsRef<str>>(&mut self, label: &str, parent: Option<&str>, slots: &[S]) -> Result<NodeId> {
        validate_label(label)?;
        if self.find_type(label).is_some() {
            return Err(GraphError::DuplicateType(label.to_string()));
        }
        let parent_id = match parent {
            Some(p) => Some(
                self.find_type(p)
                    .ok_or_else(|| GraphError::UnknownParent(p.to_string()))?,
            ),
            None => None,
        };
        let mut seen = BTreeSet::new();
        for s in slots {
            let s = s.as_ref();
            validate_label(s)?;
            if !seen.insert(s) {
                return Err(GraphError::DuplicateSlot {
                    owner: label.to_string(),
                    slot: s.to_string(),
                });
            }
        }

        let id = self.alloc_node(label.to_string(), Subgraph::Prior, NodeKind::TypeConcept);
        if let Some(p) = parent_id {
            self.alloc_edge(id, p, EdgeKind::Is);
        }
        for s in slots {
            let slot = self.alloc_node(s.as_ref().to_string(), Subgraph::Prior, NodeKind::PropertySlot);
            self.alloc_edge(id, slot, EdgeKind::Has);
        }
        Ok(id)
    }

    /// Adds `child is-a parent` between existing types.
    pub fn add_is(&mut self, child: &str, parent: &str) -> Result<EdgeId> {
        let c = self
            .find_type(child)
            .ok_or_else(|| GraphError::UnknownType(child.to_string()))?;
        let p = self
            .find_type(parent)
            .ok_or_else(|| GraphError::UnknownParent(parent.to_string()))?;
        if let Some(e) = self.outgoing(c).find(|e| e.kind == EdgeKind::Is && e.dest == p) {
            return Ok(e.id);
        }
        if self.ancestors(p).contains(&c) {
            return Err(GraphError::HierarchyCycle {
                child: child.to_string(),
                parent: parent.to_string(),
            });
        }
        Ok(self.alloc_edge(c, p, EdgeKind::Is))
    }

    /// Adds a nested property slot under a prior type or prior slot.
    pub fn add_slot(&mut self, owner: NodeId, slot: &str, default: Option<Value>) -> Result<NodeId> {
        validate_label(slot)?;
        let owner_node = self.nodes.get(&owner).ok_or(GraphError::NotASlotOwner(owner))?;
        if owner_node.subgraph != Subgraph::Prior
            || !matches!(owner_node.kind, NodeKind::TypeConcept | NodeKind::PropertySlot)
        {
            return Err(GraphError::NotASlotOwner(owner));
        }
        if self.slots(owner).iter().any(|(n, _)| n == slot) {
            return Err(GraphError::DuplicateSlot {
                owner: owner_node.label.clone(),
                slot: slot.to_string(),
            });
        }
        let id = self.alloc_node(slot.to_string(), Subgraph::Prior, NodeKind::PropertySlot);
        self.nodes.get_mut(&id).expect("just allocated").value = default;
        self.alloc_edge(owner, id, EdgeKind::Has);
        Ok(id)
    }

    /// Records `actor_type --action--> impl(skill_ref)` for `object_type`.
    ///
    /// Implementation nodes are shared between actions that use the same
    /// skill. Re-defining an identical binding returns the existing edge.
    pub fn define_action(&mut self, actor_type: &str, action: &str, object_type: &str, skill_ref: &str) -> Result<EdgeId> {
        validate_label(action)?;
        validate_label(skill_ref)?;
        let actor = self
            .find_type(actor_type)
            .ok_or_else(|| GraphError::UnknownType(actor_type.to_string()))?;
        let object = self
            .find_type(object_type)
            .ok_or_else(|| GraphError::UnknownType(object_type.to_string()))?;

        let existing = self.outgoing(actor).find(|e| match &e.kind {
            EdgeKind::Action { label, object: o } => *o == object && label.eq_ignore_ascii_case(action),
            _ => false,
        });
        if let Some(e) = existing {
            let bound = self.nodes[&e.dest].skill_ref.clone().unwrap_or_default();
            if bound == skill_ref {
                return Ok(e.id);
            }
            return Err(GraphError::ActionConflict {
                actor: actor_type.to_string(),
                action: action.to_string(),
                object: object_type.to_string(),
                existing: bound,
            });
        }

        let imp = self
            .nodes
            .values()
            .find(|n| n.kind == NodeKind::ActionImpl && n.skill_ref.as_deref() == Some(skill_ref))
            .map(|n| n.id);
        let imp = match imp {
            Some(id) => id,
            None => {
                let id = self.alloc_node(skill_ref.to_string(), Subgraph::Prior, NodeKind::ActionImpl);
                self.nodes.get_mut(&id).expect("just allocated").skill_ref = Some(skill_ref.to_string());
                id
            }
        };
        Ok(self.alloc_edge(
            actor,
            imp,
            EdgeKind::Action {
                label: action.to_string(),
                object,
            },
        ))
    }

    /// Creates a scene instance of `type_label`.
    ///
    /// Adds the instance node and its `instance-of` edge, names it from the
    /// type's counter, copies the type's `has` tree into the scene, then
    /// writes `values` into the copied direct slots. The instance node
    /// itself carries the pose; a `position` slot, when present, receives
    /// the position vector.
    pub fn instantiate(&mut self, type_label: &str, values: &[PropertyValue], pose: Pose) -> Result<NodeId> {
        let ty = self
            .find_type(type_label)
            .ok_or_else(|| GraphError::UnknownType(type_label.to_string()))?;
        if !pose.is_finite() {
            return Err(GraphError::InvalidPose);
        }
        let pose = Pose::new(pose.position, pose.orientation);
        let canonical = self.nodes[&ty].label.clone();
        let direct: BTreeSet<String> = self.slots(ty).into_iter().map(|(n, _)| n).collect();
        if let Some(bad) = values.iter().find(|v| !direct.contains(&v.slot)) {
            return Err(GraphError::UnknownSlot {
                type_label: canonical,
                slot: bad.slot.clone(),
            });
        }

        let n = self.counters.get(&canonical).copied().unwrap_or(0) + 1;
        self.counters.insert(canonical.clone(), n);
        let label = instance_label(&canonical, n);
        let inst = self.alloc_node(label.clone(), Subgraph::Scene, NodeKind::ObjectInstance);
        self.nodes.get_mut(&inst).expect("just allocated").value = Some(Value::Pose(pose));
        self.alloc_edge(inst, ty, EdgeKind::InstanceOf);

        let mut queue = VecDeque::from([(ty, inst, label)]);
        while let Some((prior_owner, scene_owner, scene_label)) = queue.pop_front() {
            for (name, prior_slot) in self.slots(prior_owner) {
                let copy_label = format!("{scene_label}.{name}");
                let copy = self.alloc_node(copy_label.clone(), Subgraph::Scene, NodeKind::PropertySlot);
                let default = self.nodes[&prior_slot].value.clone();
                self.nodes.get_mut(&copy).expect("just allocated").value = default;
                self.alloc_edge(scene_owner, copy, EdgeKind::Has);
                queue.push_back((prior_slot, copy, copy_label));
            }
        }

        if direct.contains("position") {
            self.write_slot(inst, "position", Value::Vector(pose.position.to_vec()));
        }
        for v in values {
            self.write_slot(inst, &v.slot, v.value.clone());
        }
        Ok(inst)
    }

    fn write_slot(&mut self, owner: NodeId, slot: &str, value: Value) {
        if let Some((_, id)) = self.slots(owner).into_iter().find(|(n, _)| n == slot) {
            self.nodes.get_mut(&id).expect("slot exists").value = Some(value);
        }
    }

    /// Moves an instance: updates its pose and its `position` slot if any.
    pub fn set_instance_pose(&mut self, id: NodeId, pose: Pose) -> Result<()> {
        if !self.is_live_instance(id) {
            return Err(GraphError::NotAnInstance(id));
        }
        if !pose.is_finite() {
            return Err(GraphError::InvalidPose);
        }
        let pose = Pose::new(pose.position, pose.orientation);
        self.nodes.get_mut(&id).expect("live").value = Some(Value::Pose(pose));
        self.write_slot(id, "position", Value::Vector(pose.position.to_vec()));
        Ok(())
    }

    pub fn instance_pose(&self, id: NodeId) -> Option<Pose> {
        match self.nodes.get(&id)?.value {
            Some(Value::Pose(p)) => Some(p),
            _ => None,
        }
    }

    /// Removes an instance and its copied property tree. The type's
    /// counter is left untouched so the label is never issued again.
    pub fn remove_instance(&mut self, id: NodeId) -> Result<usize> {
        if !self.is_live_instance(id) {
            return Err(GraphError::NotAnInstance(id));
        }
        let mut doomed = vec![id];
        let mut i = 0;
        while i < doomed.len() {
            let owner = doomed[i];
            doomed.extend(self.slots(owner).into_iter().map(|(_, c)| c));
            i += 1;
        }
        for n in &doomed {
            self.drop_node(*n);
        }
        Ok(doomed.len())
    }

    /// Drops the whole scene subgraph. Counters persist.
    pub fn clear_scene(&mut self) -> usize {
        let scene: Vec<NodeId> = self
            .nodes
            .values()
            .filter(|n| n.subgraph == Subgraph::Scene)
            .map(|n| n.id)
            .collect();
        for id in &scene {
            self.drop_node(*id);
        }
        scene.len()
    }

    // ---- persistence support ----------------------------------------

    /// Flattens the graph. With `include_scene == false` only the prior
    /// subgraph is emitted; counters and id allocators are kept either way.
    pub fn to_parts(&self, include_scene: bool) -> GraphParts {
        let keep = |n: &Node| include_scene || n.subgraph == Subgraph::Prior;
        let nodes: Vec<Node> = self.nodes.values().filter(|n| keep(n)).cloned().collect();
        let mut edges: Vec<Edge> = self
            .edges
            .values()
            .filter(|e| keep(&self.nodes[&e.source]) && keep(&self.nodes[&e.dest]))
            .cloned()
            .collect();
        edges.sort_by(|a, b| (a.source, a.dest, &a.kind, a.id).cmp(&(b.source, b.dest, &b.kind, b.id)));
        GraphParts {
            nodes,
            edges,
            counters: self.counters.clone(),
            next_node_id: self.next_node,
            next_edge_id: self.next_edge,
        }
    }

    /// Rebuilds a graph from flat parts, enforcing every invariant.
    pub fn from_parts(parts: GraphParts) -> Result<Self, InvariantViolation> {
        let mut g = KnowledgeGraph {
            counters: parts.counters,
            next_node: parts.next_node_id,
            next_edge: parts.next_edge_id,
            ..Default::default()
        };
        for n in parts.nodes {
            if g.nodes.contains_key(&n.id) {
                return Err(InvariantViolation::new(format!("duplicate node id {}", n.id)));
            }
            if n.kind == NodeKind::TypeConcept {
                if g.type_index.insert(n.label.to_lowercase(), n.id).is_some() {
                    return Err(InvariantViolation::new(format!("duplicate type label `{}`", n.label)));
                }
            } else if n.subgraph == Subgraph::Scene && g.scene_index.insert(n.label.clone(), n.id).is_some() {
                return Err(InvariantViolation::new(format!("duplicate scene label `{}`", n.label)));
            }
            g.nodes.insert(n.id, n);
        }
        for e in parts.edges {
            if g.edges.contains_key(&e.id) {
                return Err(InvariantViolation::new(format!("duplicate edge id {}", e.id)));
            }
            for end in [e.source, e.dest] {
                if !g.nodes.contains_key(&end) {
                    return Err(InvariantViolation::new(format!("edge {} references missing node {end}", e.id)));
                }
            }
            g.out_edges.entry(e.source).or_default().insert(e.id);
            g.in_edges.entry(e.dest).or_default().insert(e.id);
            g.edges.insert(e.id, e);
        }
        g.check_invariants()?;
        Ok(g)
    }
}

#[cfg(test)]
mod tests;
