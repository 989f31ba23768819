//! Semantic memory for simulated industrial robots: a dual knowledge graph
//! of type knowledge and live scene state, a restricted instruction parser,
//! grounding against the graph, simulated skill execution, and an operator
//! dialogue that grows the graph when something is unknown.

pub mod engine;
pub mod executor;
pub mod graph;
pub mod nlparse;
pub mod perception;
pub mod persistence;
pub mod resolver;
pub mod scenario;
pub mod session;
#[cfg(feature = "testkit")]
pub mod testkit;
pub mod transcript;
pub mod world;
