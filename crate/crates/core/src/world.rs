//! The mutable state that learning touches: graph, reference signatures and
//! skills. Kept together so a dialogue answer can be applied to a copy and
//! swapped in only when every step succeeds.

use crate::executor::{register_builtin_skills, ExecError, SkillRegistry, SEED_ACTOR, SEED_OBJECT_TYPES};
use crate::graph::KnowledgeGraph;
use crate::perception::{Signature, SignatureDb, DESCRIPTOR_DIM};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct World {
    pub graph: KnowledgeGraph,
    pub signatures: SignatureDb,
    pub skills: SkillRegistry,
}

/// Slots every seed object type carries; also what a sensor reports.
pub const OBJECT_SLOTS: [&str; 4] = ["color", "shape", "size", "position"];

pub fn one_hot(i: usize) -> Vec<f64> {
    let mut v = vec![0.0; DESCRIPTOR_DIM];
    v[i % DESCRIPTOR_DIM] = 1.0;
    v
}

/// Reference signatures for the seed types.
pub fn seed_signatures() -> Vec<(&'static str, Signature)> {
    vec![
        (SEED_ACTOR, Signature::new("robot", "white", [500.0, 400.0, 600.0])),
        ("Nut", Signature::new("hexagonal", "green", [10.0, 10.0, 6.0]).with_descriptor(one_hot(0))),
        ("Screw", Signature::new("cylindrical", "blue", [6.0, 6.0, 30.0]).with_descriptor(one_hot(1))),
        ("Box", Signature::new("square", "gray", [200.0, 150.0, 100.0]).with_descriptor(one_hot(2))),
        ("Clip", Signature::new("big", "green", [40.0, 10.0, 5.0]).with_descriptor(one_hot(3))),
        ("Clip", Signature::new("small", "blue", [20.0, 6.0, 3.0]).with_descriptor(one_hot(3))),
    ]
}

/// The bootstrap prior: the robot, the four seed object types, their
/// reference signatures and built-in pick/place skills.
pub fn seed_world() -> Result<World, ExecError> {
    let mut w = World::default();
    w.graph.add_type(SEED_ACTOR, None, &["position"])?;
    for ty in SEED_OBJECT_TYPES {
        w.graph.add_type(ty, None, &OBJECT_SLOTS)?;
    }
    register_builtin_skills(&mut w.graph, &mut w.skills)?;
    for (ty, sig) in seed_signatures() {
        w.signatures
            .register(&w.graph, ty, sig)
            .expect("seed signatures are valid and typed");
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::ActionLookup;

    #[test]
    fn seed_has_pick_for_every_object() {
        let w = seed_world().unwrap();
        w.graph.check_invariants().unwrap();
        for ty in SEED_OBJECT_TYPES {
            assert!(matches!(
                w.graph.lookup_action("YuMi", "pick", ty).unwrap(),
                ActionLookup::Exact(_)
            ));
        }
        assert_eq!(w.skills.len(), 2 * SEED_OBJECT_TYPES.len());
        assert_eq!(w.signatures.len(), seed_signatures().len());
        assert_eq!(w.graph.instances().len(), 0);
    }
}
