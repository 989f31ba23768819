//! `.semem.json` documents: one versioned JSON file bundling the graph,
//! the reference signatures and the skill registry.
//!
//! Output is canonical (nodes by id, edges by source/dest/kind, skills by
//! name, pretty-printed with a trailing newline), so saving the same state
//! twice gives the same bytes. Loading re-checks every graph invariant.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::executor::{Skill, SkillRegistry};
use crate::graph::{Edge, GraphParts, KnowledgeGraph, Node};
use crate::perception::{ClassifierConfig, ReferenceSignature, SignatureDb};
use crate::world::World;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphDocument {
    pub format_version: u32,
    #[serde(default)]
    pub includes_scene: bool,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
    pub counters: BTreeMap<String, u64>,
    pub next_node_id: u64,
    pub next_edge_id: u64,
    #[serde(default)]
    pub classifier: ClassifierConfig,
    pub signatures: Vec<ReferenceSignature>,
    pub skills: Vec<Skill>,
}

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
    #[error("malformed document at line {line}, column {column} (`{path}`): {message}")]
    MalformedDocument {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
    #[error("unsupported format version {0} (expected {FORMAT_VERSION})")]
    UnsupportedVersion(u64),
    #[error("integrity violation: {0}")]
    IntegrityViolation(String),
}

impl GraphDocument {
    pub fn from_world(world: &World, include_scene: bool) -> Self {
        let parts = world.graph.to_parts(include_scene);
        let mut nodes = parts.nodes;
        nodes.sort_by_key(|n| n.id);
        let mut edges = parts.edges;
        edges.sort_by(|a, b| (a.source, a.dest, &a.kind, a.id).cmp(&(b.source, b.dest, &b.kind, b.id)));
        Self {
            format_version: FORMAT_VERSION,
            includes_scene: include_scene,
            nodes,
            edges,
            counters: parts.counters,
            next_node_id: parts.next_node_id,
            next_edge_id: parts.next_edge_id,
            classifier: *world.signatures.config(),
            signatures: world.signatures.entries().to_vec(),
            skills: world.skills.iter().cloned().collect(),
        }
    }

    /// Rebuilds the world, rejecting anything that breaks an invariant.
    pub fn into_world(self) -> Result<World, PersistError> {
        if self.format_version != FORMAT_VERSION {
            return Err(PersistError::UnsupportedVersion(self.format_version.into()));
        }
        let graph = KnowledgeGraph::from_parts(GraphParts {
            nodes: self.nodes,
            edges: self.edges,
            counters: self.counters,
            next_node_id: self.next_node_id,
            next_edge_id: self.next_edge_id,
        })
        .map_err(|v| PersistError::IntegrityViolation(v.0))?;

        let mut signatures = SignatureDb::new(self.classifier);
        for r in self.signatures {
            signatures
                .register(&graph, &r.type_label, r.signature)
                .map_err(|e| PersistError::IntegrityViolation(format!("signature for `{}`: {e}", r.type_label)))?;
        }
        let mut skills = SkillRegistry::new();
        for s in self.skills {
            skills
                .register(s)
                .map_err(|e| PersistError::IntegrityViolation(e.to_string()))?;
        }
        Ok(World {
            graph,
            signatures,
            skills,
        })
    }
}

/// Canonical text of a world.
pub fn to_string(world: &World, include_scene: bool) -> String {
    let doc = GraphDocument::from_world(world, include_scene);
    let mut s = serde_json::to_string_pretty(&doc).expect("document serializes");
    s.push('\n');
    s
}

/// Writes the canonical document and returns the byte count.
pub fn save(world: &World, include_scene: bool, out: &mut impl Write) -> Result<usize, PersistError> {
    let text = to_string(world, include_scene);
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(text.len())
}

pub fn save_to_path(world: &World, include_scene: bool, path: &Path) -> Result<usize, PersistError> {
    let text = to_string(world, include_scene);
    std::fs::write(path, &text)?;
    Ok(text.len())
}

#[derive(Deserialize)]
struct VersionProbe {
    format_version: Option<serde_json::Value>,
}

fn malformed(e: &serde_json::Error, path: String) -> PersistError {
    PersistError::MalformedDocument {
        line: e.line(),
        column: e.column(),
        path,
        message: e.to_string(),
    }
}

pub fn from_str(text: &str) -> Result<World, PersistError> {
    // version first, so a future document fails on the version and not on
    // whichever field changed shape
    let probe: VersionProbe = serde_json::from_str(text).map_err(|e| malformed(&e, ".".into()))?;
    match probe.format_version {
        Some(serde_json::Value::Number(n)) if n.as_u64() == Some(FORMAT_VERSION.into()) => {}
        Some(serde_json::Value::Number(n)) if n.as_u64().is_some() => {
            return Err(PersistError::UnsupportedVersion(n.as_u64().expect("checked")));
        }
        _ => {
            return Err(PersistError::MalformedDocument {
                line: 1,
                column: 1,
                path: "format_version".into(),
                message: "missing or non-integer format_version".into(),
            })
        }
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    let doc: GraphDocument = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        malformed(e.inner(), path)
    })?;
    doc.into_world()
}

pub fn load_from_path(path: &Path) -> Result<World, PersistError> {
    from_str(&std::fs::read_to_string(path)?)
}
