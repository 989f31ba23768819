//! Value types shared by the prior and scene subgraphs.

use std::fmt;

use serde::{Deserialize, Serialize};

/// Opaque node handle. Allocated monotonically and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Opaque edge handle. Allocated monotonically and never reused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EdgeId(pub u64);

impl fmt::Display for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subgraph {
    Prior,
    Scene,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    TypeConcept,
    ObjectInstance,
    PropertySlot,
    ActionImpl,
}

/// Object pose: position in millimetres, orientation (yaw, pitch, roll) in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub position: [f64; 3],
    pub orientation: [f64; 3],
}

impl Pose {
    /// Builds a pose, wrapping every orientation component into `[-180, 180)`.
    pub fn new(position: [f64; 3], orientation: [f64; 3]) -> Self {
        Self {
            position,
            orientation: orientation.map(wrap_degrees),
        }
    }

    pub fn at(x: f64, y: f64, z: f64) -> Self {
        Self::new([x, y, z], [0.0; 3])
    }

    pub fn origin() -> Self {
        Self::at(0.0, 0.0, 0.0)
    }

    pub fn is_finite(&self) -> bool {
        self.position.iter().chain(&self.orientation).all(|v| v.is_finite())
    }

    pub fn orientation_in_range(&self) -> bool {
        self.orientation.iter().all(|a| (-180.0..180.0).contains(a))
    }

    fn components(&self) -> Vec<f64> {
        self.position.iter().chain(&self.orientation).copied().collect()
    }
}

impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [x, y, z] = self.position;
        let [yaw, pitch, roll] = self.orientation;
        write!(f, "({x}, {y}, {z} | {yaw}, {pitch}, {roll})")
    }
}

/// Wraps an angle in degrees into `[-180, 180)`.
pub fn wrap_degrees(angle: f64) -> f64 {
    if !angle.is_finite() {
        return angle;
    }
    let mut r = (angle + 180.0).rem_euclid(360.0);
    // rem_euclid can round up to the modulus for tiny negative inputs
    if r >= 360.0 {
        r = 0.0;
    }
    r - 180.0
}

/// Static value stored on a node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Value {
    Text(String),
    Number(f64),
    Vector(Vec<f64>),
    Pose(Pose),
}

impl Value {
    pub fn text(s: impl Into<String>) -> Self {
        Value::Text(s.into())
    }

    fn as_numbers(&self) -> Option<Vec<f64>> {
        match self {
            Value::Text(_) => None,
            Value::Number(n) => Some(vec![*n]),
            Value::Vector(v) => Some(v.clone()),
            Value::Pose(p) => Some(p.components()),
        }
    }

    /// Whether a stored value satisfies `filter`.
    ///
    /// Text compares case-insensitively after trimming. Numeric values
    /// (numbers, vectors, poses) match when the Euclidean distance to the
    /// filter vector `v` is at most `1e-6 * (1 + |v|)`.
    pub fn satisfies(&self, filter: &Value) -> bool {
        match (self, filter) {
            (Value::Text(a), Value::Text(b)) => a.trim().eq_ignore_ascii_case(b.trim()),
            (Value::Text(_), _) | (_, Value::Text(_)) => false,
            _ => {
                let (Some(a), Some(b)) = (self.as_numbers(), filter.as_numbers()) else {
                    return false;
                };
                if a.len() != b.len() {
                    return false;
                }
                let dist = a.iter().zip(&b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
                let norm = b.iter().map(|y| y * y).sum::<f64>().sqrt();
                dist <= 1e-6 * (1.0 + norm)
            }
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Text(s) => f.write_str(s),
            Value::Number(n) => write!(f, "{n}"),
            Value::Vector(v) => {
                f.write_str("[")?;
                for (i, x) in v.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str("]")
            }
            Value::Pose(p) => write!(f, "{p}"),
        }
    }
}

/// A named property value, e.g. `color=green`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyValue {
    pub slot: String,
    pub value: Value,
}

impl PropertyValue {
    pub fn new(slot: impl Into<String>, value: Value) -> Self {
        Self {
            slot: slot.into(),
            value,
        }
    }

    pub fn text(slot: impl Into<String>, value: impl Into<String>) -> Self {
        Self::new(slot, Value::Text(value.into()))
    }
}

impl fmt::Display for PropertyValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}={}", self.slot, self.value)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
    pub subgraph: Subgraph,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub value: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skill_ref: Option<String>,
}

impl Node {
    /// Slot name of a property node. Scene copies are labelled
    /// `<owner>.<slot>`; the name is the last segment.
    pub fn slot_name(&self) -> &str {
        self.label.rsplit('.').next().unwrap_or(&self.label)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    /// Source has the destination as a property.
    Has,
    /// Source type is a subtype of the destination type.
    Is,
    /// Scene instance classified as the destination prior type.
    InstanceOf,
    /// User-defined task edge from an actor to an implementation node,
    /// qualified by the object type it applies to.
    Action { label: String, object: NodeId },
}

impl EdgeKind {
    pub fn name(&self) -> &str {
        match self {
            EdgeKind::Has => "has",
            EdgeKind::Is => "is",
            EdgeKind::InstanceOf => "instance-of",
            EdgeKind::Action { label, .. } => label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub id: EdgeId,
    pub source: NodeId,
    pub dest: NodeId,
    pub kind: EdgeKind,
}
