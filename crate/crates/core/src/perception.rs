//! Simulated sensing front-end.
//!
//! Observed objects arrive as symbolic + numeric signatures with a pose. Each
//! signature is matched against a reference database by nearest-neighbour
//! search; matches are instantiated in the scene graph and the rest are
//! handed back as unknowns for the operator to label.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{GraphError, KnowledgeGraph, NodeId, Pose, PropertyValue, Value};

/// Length of the optional global shape descriptor.
pub const DESCRIPTOR_DIM: usize = 16;

const UNIT_NORM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PerceptionError {
    #[error("unknown type `{0}`")]
    UnknownType(String),
    #[error("invalid signature: {0}")]
    InvalidSignature(String),
}

/// Perceptual fingerprint of an object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub shape: String,
    pub color: String,
    /// Bounding box (w, d, h) in millimetres.
    pub size: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Vec<f64>>,
}

impl Signature {
    pub fn new(shape: impl Into<String>, color: impl Into<String>, size: [f64; 3]) -> Self {
        Self {
            shape: shape.into(),
            color: color.into(),
            size,
            descriptor: None,
        }
    }

    pub fn with_descriptor(mut self, descriptor: Vec<f64>) -> Self {
        self.descriptor = Some(descriptor);
        self
    }

    pub fn volume(&self) -> f64 {
        self.size.iter().product()
    }

    pub fn validate(&self) -> Result<(), PerceptionError> {
        if self.shape.trim().is_empty() || self.color.trim().is_empty() {
            return Err(PerceptionError::InvalidSignature("shape and color must be non-empty".into()));
        }
        if !self.size.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(PerceptionError::InvalidSignature(format!(
                "size components must be positive, got {:?}",
                self.size
            )));
        }
        if let Some(d) = &self.descriptor {
            if d.len() != DESCRIPTOR_DIM {
                return Err(PerceptionError::InvalidSignature(format!(
                    "descriptor has {} components, expected {DESCRIPTOR_DIM}",
                    d.len()
                )));
            }
            let norm = l2(d);
            if !norm.is_finite() || (norm - 1.0).abs() > UNIT_NORM_TOLERANCE {
                return Err(PerceptionError::InvalidSignature(format!(
                    "descriptor norm {norm} is not 1"
                )));
            }
        }
        Ok(())
    }
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn l2_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Scales a vector to unit length. `None` for zero or non-finite input.
pub fn unit_normalize(v: &[f64]) -> Option<Vec<f64>> {
    let n = l2(v);
    (n.is_finite() && n > 0.0).then(|| v.iter().map(|x| x / n).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistanceWeights {
    pub shape: f64,
    pub color: f64,
    pub size: f64,
    pub descriptor: f64,
}

impl Default for DistanceWeights {
    fn default() -> Self {
        Self {
            shape: 0.4,
            color: 0.2,
            size: 0.2,
            descriptor: 0.2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    /// Largest combined distance still accepted as a match.
    pub threshold: f64,
    pub weights: DistanceWeights,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            threshold: 0.25,
            weights: DistanceWeights::default(),
        }
    }
}

/// Combined distance in `[0, 1]` when the weights sum to one.
///
/// Terms: 0/1 shape mismatch, 0/1 color mismatch (both case-insensitive),
/// size distance `|a-b| / (|a|+|b|)`, and half the Euclidean distance
/// between unit descriptors when both sides carry one.
pub fn signature_distance(a: &Signature, b: &Signature, w: &DistanceWeights) -> f64 {
    let mismatch = |x: &str, y: &str| if x.trim().eq_ignore_ascii_case(y.trim()) { 0.0 } else { 1.0 };
    let size = l2_diff(&a.size, &b.size) / (l2(&a.size) + l2(&b.size));
    let descriptor = match (&a.descriptor, &b.descriptor) {
        (Some(x), Some(y)) => l2_diff(x, y) / 2.0,
        _ => 0.0,
    };
    w.shape * mismatch(&a.shape, &b.shape)
        + w.color * mismatch(&a.color, &b.color)
        + w.size * size
        + w.descriptor * descriptor
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Match { type_label: String, distance: f64 },
    Unknown { nearest: Option<(String, f64)> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceSignature {
    pub type_label: String,
    pub signature: Signature,
}

/// Distances closer than this count as equal, so rounding in the size and
/// descriptor terms cannot decide a tie or the threshold.
pub const TIE_EPSILON: f64 = 1e-12;

/// Reference signatures per type, searched by nearest neighbour.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SignatureDb {
    entries: Vec<ReferenceSignature>,
    config: ClassifierConfig,
}

impl SignatureDb {
    pub fn new(config: ClassifierConfig) -> Self {
        Self {
            entries: Vec::new(),
            config,
        }
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: ClassifierConfig) {
        self.config = config;
    }

    pub fn entries(&self) -> &[ReferenceSignature] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn signatures_for(&self, type_label: &str) -> Vec<&Signature> {
        self.entries
            .iter()
            .filter(|e| e.type_label.eq_ignore_ascii_case(type_label))
            .map(|e| &e.signature)
            .collect()
    }

    /// Appends a reference signature for an existing prior type.
    pub fn register(&mut self, graph: &KnowledgeGraph, type_label: &str, signature: Signature) -> Result<(), PerceptionError> {
        let ty = graph
            .find_type(type_label)
            .ok_or_else(|| PerceptionError::UnknownType(type_label.to_string()))?;
        signature.validate()?;
        let canonical = graph.type_label(ty).expect("type node").to_string();
        self.entries.push(ReferenceSignature {
            type_label: canonical,
            signature,
        });
        Ok(())
    }

    /// Restores entries verbatim (persistence path; caller validates).
    pub fn from_entries(entries: Vec<ReferenceSignature>, config: ClassifierConfig) -> Self {
        Self { entries, config }
    }

    /// Observations smaller than this volume are treated as noise:
    /// half the smallest reference volume.
    pub fn min_volume(&self) -> Option<f64> {
        self.entries
            .iter()
            .map(|e| e.signature.volume())
            .min_by(f64::total_cmp)
            .map(|v| 0.5 * v)
    }

    /// Nearest reference wins; equal distances go to the lexicographically
    /// smallest type label, so insertion order never matters.
    pub fn classify(&self, signature: &Signature) -> Classification {
        let mut best: Option<(f64, &str)> = None;
        for e in &self.entries {
            let d = signature_distance(signature, &e.signature, &self.config.weights);
            let better = match best {
                None => true,
                Some((bd, bl)) => d < bd - TIE_EPSILON || (d <= bd + TIE_EPSILON && e.type_label.as_str() < bl),
            };
            if better {
                best = Some((d, &e.type_label));
            }
        }
        match best {
            Some((d, label)) if d <= self.config.threshold + TIE_EPSILON => Classification::Match {
                type_label: label.to_string(),
                distance: d,
            },
            Some((d, label)) => Classification::Unknown {
                nearest: Some((label.to_string(), d)),
            },
            None => Classification::Unknown { nearest: None },
        }
    }
}

/// One sensed object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ObservationRecord", into = "ObservationRecord")]
pub struct Observation {
    pub signature: Signature,
    pub pose: Pose,
}

impl Observation {
    pub fn new(signature: Signature, pose: Pose) -> Self {
        Self { signature, pose }
    }

    /// Properties a sensor reports for this observation, in slot form.
    pub fn detected_properties(&self) -> Vec<PropertyValue> {
        vec![
            PropertyValue::text("color", self.signature.color.clone()),
            PropertyValue::text("shape", self.signature.shape.clone()),
            PropertyValue::new("size", Value::Vector(self.signature.size.to_vec())),
            PropertyValue::new("position", Value::Vector(self.pose.position.to_vec())),
        ]
    }
}

/// Wire form of an observation in a scene-description document.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservationRecord {
    pub shape: String,
    pub color: String,
    pub size: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub descriptor: Option<Vec<f64>>,
    pub position: [f64; 3],
    pub orientation: [f64; 3],
}

impl TryFrom<ObservationRecord> for Observation {
    type Error = String;

    fn try_from(r: ObservationRecord) -> Result<Self, Self::Error> {
        let descriptor = match r.descriptor {
            Some(d) => {
                if d.len() != DESCRIPTOR_DIM {
                    return Err(format!("descriptor must have {DESCRIPTOR_DIM} components, got {}", d.len()));
                }
                Some(unit_normalize(&d).ok_or("descriptor must be finite and non-zero")?)
            }
            None => None,
        };
        let signature = Signature {
            shape: r.shape,
            color: r.color,
            size: r.size,
            descriptor,
        };
        signature.validate().map_err(|e| e.to_string())?;
        let pose = Pose::new(r.position, r.orientation);
        if !pose.is_finite() {
            return Err("pose must be finite".into());
        }
        Ok(Observation { signature, pose })
    }
}

impl From<Observation> for ObservationRecord {
    fn from(o: Observation) -> Self {
        ObservationRecord {
            shape: o.signature.shape,
            color: o.signature.color,
            size: o.signature.size,
            descriptor: o.signature.descriptor,
            position: o.pose.position,
            orientation: o.pose.orientation,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SceneDocError {
    #[error("malformed scene document at line {line}, column {column} ({path}): {message}")]
    Malformed {
        line: usize,
        column: usize,
        path: String,
        message: String,
    },
}

/// Parses a scene-description document: a JSON array of observations.
pub fn parse_scene_document(text: &str) -> Result<Vec<Observation>, SceneDocError> {
    let mut de = serde_json::Deserializer::from_str(text);
    let result: Result<Vec<Observation>, _> = serde_path_to_error::deserialize(&mut de);
    let observations = result.map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        SceneDocError::Malformed {
            line: inner.line(),
            column: inner.column(),
            path,
            message: inner.to_string(),
        }
    })?;
    de.end().map_err(|e| SceneDocError::Malformed {
        line: e.line(),
        column: e.column(),
        path: ".".into(),
        message: e.to_string(),
    })?;
    Ok(observations)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstantiatedObject {
    pub id: NodeId,
    pub label: String,
    pub type_label: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub instantiated: Vec<InstantiatedObject>,
    pub unknowns: Vec<Observation>,
    pub discarded: usize,
}

/// What ingest will do with one observation.
#[derive(Debug, Clone, PartialEq)]
pub enum Disposition {
    Discard,
    Instantiate { type_label: String, distance: f64 },
    Unknown(Classification),
}

/// Classifies every observation without touching the graph.
pub fn plan_ingest(db: &SignatureDb, observations: &[Observation]) -> Vec<Disposition> {
    let min_volume = db.min_volume().unwrap_or(0.0);
    observations
        .iter()
        .map(|o| {
            if o.signature.volume() < min_volume {
                return Disposition::Discard;
            }
            match db.classify(&o.signature) {
                Classification::Match { type_label, distance } => Disposition::Instantiate { type_label, distance },
                unknown => Disposition::Unknown(unknown),
            }
        })
        .collect()
}

/// Instantiates one observation as `type_label`, writing whichever of the
/// detected properties the type has slots for.
pub fn instantiate_observation(graph: &mut KnowledgeGraph, type_label: &str, obs: &Observation) -> Result<InstantiatedObject, GraphError> {
    let ty = graph
        .find_type(type_label)
        .ok_or_else(|| GraphError::UnknownType(type_label.to_string()))?;
    let slots: Vec<String> = graph.slots(ty).into_iter().map(|(n, _)| n).collect();
    let values: Vec<PropertyValue> = obs
        .detected_properties()
        .into_iter()
        .filter(|p| slots.contains(&p.slot))
        .collect();
    let id = graph.instantiate(type_label, &values, obs.pose)?;
    Ok(InstantiatedObject {
        id,
        label: graph.node(id).expect("fresh instance").label.clone(),
        type_label: graph.type_label(ty).expect("type").to_string(),
    })
}

/// Classifies and instantiates a scene. Unknown objects are reported, not
/// added to the graph. The prior subgraph is never modified.
pub fn ingest_scene(graph: &mut KnowledgeGraph, db: &SignatureDb, observations: &[Observation]) -> Result<IngestReport, GraphError> {
    let plan = plan_ingest(db, observations);
    apply_ingest(graph, observations, &plan)
}

pub fn apply_ingest(graph: &mut KnowledgeGraph, observations: &[Observation], plan: &[Disposition]) -> Result<IngestReport, GraphError> {
    let mut report = IngestReport::default();
    for (obs, disposition) in observations.iter().zip(plan) {
        match disposition {
            Disposition::Discard => report.discarded += 1,
            Disposition::Instantiate { type_label, .. } => {
                report.instantiated.push(instantiate_observation(graph, type_label, obs)?);
            }
            Disposition::Unknown(_) => report.unknowns.push(obs.clone()),
        }
    }
    Ok(report)
}
