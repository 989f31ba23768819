use std::collections::BTreeSet;

use super::*;

fn fasteners() -> KnowledgeGraph {
    let mut g = KnowledgeGraph::new();
    g.add_type("YuMi", None, &["position"]).unwrap();
    g.add_type("Fastener", None, &[] as &[&str]).unwrap();
    g.add_type("Nut", Some("Fastener"), &["color", "shape", "position"]).unwrap();
    g.add_type("Screw", Some("Fastener"), &["color", "shape", "position"]).unwrap();
    g.add_type("Box", None, &["color", "shape", "position"]).unwrap();
    g
}

/// Independent traversal: every node reachable from `root` through `has`.
fn has_subtree_size(g: &KnowledgeGraph, root: NodeId) -> usize {
    let mut seen = BTreeSet::from([root]);
    let mut stack = vec![root];
    while let Some(n) = stack.pop() {
        for e in g.edges() {
            if e.source == n && e.kind == EdgeKind::Has && seen.insert(e.dest) {
                stack.push(e.dest);
            }
        }
    }
    seen.len()
}

#[test]
fn add_type_creates_has_linked_slots() {
    let mut g = KnowledgeGraph::new();
    let nut = g.add_type("Nut", None, &["color", "shape", "position"]).unwrap();
    let node = g.node(nut).unwrap();
    assert_eq!(node.kind, NodeKind::TypeConcept);
    assert_eq!(node.subgraph, Subgraph::Prior);
    let mut slots: Vec<String> = g.slots(nut).into_iter().map(|(n, _)| n).collect();
    slots.sort();
    assert_eq!(slots, ["color", "position", "shape"]);
    g.check_invariants().unwrap();
}

#[test]
fn add_type_bare_and_duplicate() {
    let mut g = KnowledgeGraph::new();
    let thing = g.add_type("Thing", None, &[] as &[&str]).unwrap();
    assert!(g.slots(thing).is_empty());
    g.add_type("Nut", None, &["color"]).unwrap();
    assert_eq!(
        g.add_type("Nut", None, &[] as &[&str]),
        Err(GraphError::DuplicateType("Nut".into()))
    );
    assert_eq!(
        g.add_type("nut", None, &[] as &[&str]),
        Err(GraphError::DuplicateType("nut".into()))
    );
    assert_eq!(
        g.add_type("Bolt", Some("Ghost"), &[] as &[&str]),
        Err(GraphError::UnknownParent("Ghost".into()))
    );
    assert!(matches!(g.add_type("a.b", None, &[] as &[&str]), Err(GraphError::InvalidLabel(_))));
    assert!(matches!(
        g.add_type("Pin", None, &["color", "color"]),
        Err(GraphError::DuplicateSlot { .. })
    ));
}

#[test]
fn is_cycle_rejected() {
    let mut g = fasteners();
    g.add_type("HexNut", Some("Nut"), &[] as &[&str]).unwrap();
    assert!(matches!(g.add_is("Fastener", "HexNut"), Err(GraphError::HierarchyCycle { .. })));
    assert!(matches!(g.add_is("Nut", "Nut"), Err(GraphError::HierarchyCycle { .. })));
    g.add_is("HexNut", "Fastener").unwrap();
    g.check_invariants().unwrap();
}

#[test]
fn define_action_distinct_per_object() {
    let mut g = fasteners();
    let e1 = g.define_action("YuMi", "pick", "Nut", "pick_nut_skill").unwrap();
    let e2 = g.define_action("YuMi", "pick", "Screw", "pick_screw_skill").unwrap();
    assert_ne!(e1, e2);
    assert_eq!(g.define_action("YuMi", "pick", "Nut", "pick_nut_skill").unwrap(), e1);
    assert!(matches!(
        g.define_action("YuMi", "pick", "Nut", "other"),
        Err(GraphError::ActionConflict { .. })
    ));
    assert_eq!(
        g.define_action("YuMi", "pick", "Gear", "pick_gear_skill"),
        Err(GraphError::UnknownType("Gear".into()))
    );
    g.check_invariants().unwrap();
}

#[test]
fn shared_skill_reuses_impl_node() {
    let mut g = fasteners();
    g.define_action("YuMi", "pick", "Nut", "generic_pick").unwrap();
    g.define_action("YuMi", "pick", "Box", "generic_pick").unwrap();
    let impls = g.nodes().filter(|n| n.kind == NodeKind::ActionImpl).count();
    assert_eq!(impls, 1);
}

#[test]
fn instantiate_names_and_fills_slots() {
    let mut g = fasteners();
    let nut = g
        .instantiate("Nut", &[PropertyValue::text("color", "green")], Pose::at(10.0, 55.0, -10.0))
        .unwrap();
    assert_eq!(g.node(nut).unwrap().label, "nut_1");
    assert_eq!(g.slot_value(nut, "color"), Some(&Value::text("green")));
    assert_eq!(
        g.slot_value(nut, "position"),
        Some(&Value::Vector(vec![10.0, 55.0, -10.0]))
    );
    let nut_ty = g.find_type("Nut").unwrap();
    assert_eq!(g.instance_type(nut), Some(nut_ty));
    g.check_invariants().unwrap();
}

#[test]
fn successive_instances_counted() {
    let mut g = KnowledgeGraph::new();
    g.add_type("Clip", None, &["shape"]).unwrap();
    let a = g.instantiate("Clip", &[], Pose::origin()).unwrap();
    let b = g.instantiate("Clip", &[], Pose::origin()).unwrap();
    assert_eq!(g.node(a).unwrap().label, "clip_1");
    assert_eq!(g.node(b).unwrap().label, "clip_2");
}

#[test]
fn instantiate_slotless_and_errors() {
    let mut g = KnowledgeGraph::new();
    g.add_type("Thing", None, &[] as &[&str]).unwrap();
    let t = g.instantiate("Thing", &[], Pose::origin()).unwrap();
    assert!(g.slots(t).is_empty());
    assert_eq!(
        g.instantiate("Ghost", &[], Pose::origin()),
        Err(GraphError::UnknownType("Ghost".into()))
    );
    assert!(matches!(
        g.instantiate("Thing", &[PropertyValue::text("color", "red")], Pose::origin()),
        Err(GraphError::UnknownSlot { .. })
    ));
    assert_eq!(
        g.instantiate("Thing", &[], Pose::at(f64::NAN, 0.0, 0.0)),
        Err(GraphError::InvalidPose)
    );
    // failed calls do not consume counter values
    assert_eq!(g.counter("Thing"), 1);
}

#[test]
fn nested_slots_copied_isomorphically() {
    let mut g = KnowledgeGraph::new();
    let ty = g.add_type("Gripper", None, &["jaw"]).unwrap();
    let jaw = g.slots(ty)[0].1;
    g.add_slot(jaw, "width", Some(Value::Number(40.0))).unwrap();
    g.add_slot(jaw, "force", None).unwrap();
    let inst = g.instantiate("Gripper", &[], Pose::origin()).unwrap();
    assert_eq!(g.has_profile(inst), g.has_profile(ty));
    assert_eq!(g.has_profile(inst), ["jaw", "jaw.force", "jaw.width"]);
    let copied_jaw = g.scene_node("gripper_1.jaw").unwrap();
    assert_eq!(g.slot_value(copied_jaw, "width"), Some(&Value::Number(40.0)));
    g.check_invariants().unwrap();
}

#[test]
fn remove_instance_counts_subtree() {
    let mut g = fasteners();
    let screw = g.instantiate("Screw", &[], Pose::origin()).unwrap();
    let expected = has_subtree_size(&g, screw);
    assert_eq!(expected, 4);
    let prior_before = g.to_parts(false);
    assert_eq!(g.remove_instance(screw), Ok(expected));
    assert_eq!(g.remove_instance(screw), Err(GraphError::NotAnInstance(screw)));
    assert_eq!(g.to_parts(false).nodes, prior_before.nodes);
    assert_eq!(g.to_parts(false).edges, prior_before.edges);
    let again = g.instantiate("Screw", &[], Pose::origin()).unwrap();
    assert_eq!(g.node(again).unwrap().label, "screw_2");
    g.check_invariants().unwrap();
}

#[test]
fn counter_monotone_over_replayed_ops() {
    // replay oracle: track issued numbers independently of the graph
    let mut g = fasteners();
    let mut issued = 0u64;
    let mut live = Vec::new();
    for step in 0..20 {
        if step % 3 == 2 {
            if let Some(id) = live.pop() {
                g.remove_instance(id).unwrap();
            }
        } else {
            let id = g.instantiate("Nut", &[], Pose::origin()).unwrap();
            issued += 1;
            assert_eq!(g.node(id).unwrap().label, format!("nut_{issued}"));
            live.push(id);
        }
        assert_eq!(g.counter("Nut"), issued);
    }
}

#[test]
fn type_closure_includes_subtypes_sorted() {
    let g = fasteners();
    assert_eq!(g.type_closure("Nut").unwrap(), ["Nut"]);
    assert_eq!(g.type_closure("Fastener").unwrap(), ["Fastener", "Nut", "Screw"]);
    assert_eq!(g.type_closure("Ghost"), Err(GraphError::UnknownType("Ghost".into())));
}

#[test]
fn type_closure_matches_reachability_oracle() {
    let mut g = fasteners();
    g.add_type("HexNut", Some("Nut"), &[] as &[&str]).unwrap();
    g.add_type("Widget", None, &[] as &[&str]).unwrap();
    g.add_is("HexNut", "Widget").unwrap();
    for ty in g.type_labels() {
        // brute force: t is in closure(ty) iff ty is reachable from t over is
        let target = g.find_type(&ty).unwrap();
        let mut expected: Vec<String> = g
            .type_labels()
            .into_iter()
            .filter(|t| {
                let mut stack = vec![g.find_type(t).unwrap()];
                let mut seen = BTreeSet::new();
                while let Some(n) = stack.pop() {
                    if n == target {
                        return true;
                    }
                    if seen.insert(n) {
                        stack.extend(
                            g.edges()
                                .filter(|e| e.source == n && e.kind == EdgeKind::Is)
                                .map(|e| e.dest),
                        );
                    }
                }
                false
            })
            .collect();
        expected.sort();
        assert_eq!(g.type_closure(&ty).unwrap(), expected, "closure of {ty}");
    }
}

#[test]
fn query_filters_and_orders() {
    let mut g = fasteners();
    let n1 = g.instantiate("Nut", &[PropertyValue::text("color", "green")], Pose::origin()).unwrap();
    let n2 = g.instantiate("Nut", &[PropertyValue::text("color", "blue")], Pose::origin()).unwrap();
    let s1 = g.instantiate("Screw", &[], Pose::origin()).unwrap();
    assert_eq!(g.query_instances("Nut", &[]).unwrap(), [n1, n2]);
    assert_eq!(g.query_instances("nut", &[PropertyValue::text("color", "GREEN")]).unwrap(), [n1]);
    assert!(g.query_instances("Nut", &[PropertyValue::text("color", "purple")]).unwrap().is_empty());
    assert_eq!(g.query_instances("Fastener", &[]).unwrap(), [n1, s1, n2]);
    assert_eq!(g.query_instances("Ghost", &[]), Err(GraphError::UnknownType("Ghost".into())));
}

#[test]
fn query_big_clip() {
    let mut g = KnowledgeGraph::new();
    g.add_type("Clip", None, &["color", "shape"]).unwrap();
    let c1 = g
        .instantiate(
            "Clip",
            &[PropertyValue::text("color", "green"), PropertyValue::text("shape", "big")],
            Pose::origin(),
        )
        .unwrap();
    g.instantiate(
        "Clip",
        &[PropertyValue::text("color", "blue"), PropertyValue::text("shape", "small")],
        Pose::origin(),
    )
    .unwrap();
    assert_eq!(g.query_instances("Clip", &[PropertyValue::text("shape", "big")]).unwrap(), [c1]);
}

#[test]
fn lookup_exact_and_near_misses() {
    let mut g = fasteners();
    g.add_type("new_obj", None, &[] as &[&str]).unwrap();
    g.define_action("YuMi", "pick", "Nut", "pick_nut_skill").unwrap();
    g.define_action("YuMi", "pick", "Screw", "pick_screw_skill").unwrap();
    g.define_action("YuMi", "pick", "Box", "pick_box_skill").unwrap();
    match g.lookup_action("YuMi", "pick", "Screw").unwrap() {
        ActionLookup::Exact(m) => assert_eq!(m.skill_ref, "pick_screw_skill"),
        other => panic!("expected exact, got {other:?}"),
    }
    let ActionLookup::NearMisses(near) = g.lookup_action("YuMi", "pick", "new_obj").unwrap() else {
        panic!("expected near misses");
    };
    let objects: Vec<&str> = near.iter().map(|n| n.object_type.as_str()).collect();
    assert_eq!(objects, ["Box", "Nut", "Screw"]);
    assert_eq!(
        g.lookup_action("YuMi", "juggle", "Nut").unwrap(),
        ActionLookup::NearMisses(vec![])
    );
    assert_eq!(
        g.lookup_action("Ghost", "pick", "Nut"),
        Err(GraphError::UnknownType("Ghost".into()))
    );
}

#[test]
fn lookup_generalizes_through_is_nearest_first() {
    let mut g = fasteners();
    g.add_type("HexNut", Some("Nut"), &[] as &[&str]).unwrap();
    g.add_type("Robot", None, &[] as &[&str]).unwrap();
    g.add_is("YuMi", "Robot").unwrap();
    g.define_action("Robot", "pick", "Fastener", "generic_fastener_pick").unwrap();
    g.define_action("YuMi", "pick", "Nut", "pick_nut_skill").unwrap();
    let ActionLookup::Exact(m) = g.lookup_action("YuMi", "pick", "HexNut").unwrap() else {
        panic!()
    };
    assert_eq!(m.skill_ref, "pick_nut_skill");
    assert_eq!(m.object_type, "Nut");
    let ActionLookup::Exact(m) = g.lookup_action("YuMi", "pick", "Screw").unwrap() else {
        panic!()
    };
    assert_eq!(m.skill_ref, "generic_fastener_pick");
    assert_eq!(m.actor_type, "Robot");
}

#[test]
fn place_updates_pose_and_position_slot() {
    let mut g = fasteners();
    let b = g.instantiate("Box", &[], Pose::origin()).unwrap();
    let target = Pose::new([400.0, 0.0, 100.0], [190.0, 0.0, 0.0]);
    g.set_instance_pose(b, target).unwrap();
    assert_eq!(g.instance_pose(b).unwrap().orientation, [-170.0, 0.0, 0.0]);
    assert_eq!(g.slot_value(b, "position"), Some(&Value::Vector(vec![400.0, 0.0, 100.0])));
}

#[test]
fn clear_scene_keeps_counters() {
    let mut g = fasteners();
    g.instantiate("Nut", &[], Pose::origin()).unwrap();
    g.instantiate("Box", &[], Pose::origin()).unwrap();
    let prior = g.to_parts(false);
    assert_eq!(g.clear_scene(), 2 + 3 + 3);
    assert!(g.instances().is_empty());
    assert_eq!(g.to_parts(false), prior);
    let n = g.instantiate("Nut", &[], Pose::origin()).unwrap();
    assert_eq!(g.node(n).unwrap().label, "nut_2");
}

#[test]
fn from_parts_rejects_broken_documents() {
    let mut g = fasteners();
    g.instantiate("Nut", &[], Pose::origin()).unwrap();
    let good = g.to_parts(true);
    assert_eq!(KnowledgeGraph::from_parts(good.clone()).unwrap(), g);

    let mut dangling = good.clone();
    dangling.edges[0].dest = NodeId(9_999);
    assert!(KnowledgeGraph::from_parts(dangling).is_err());

    let mut cross = good.clone();
    let has = cross.edges.iter_mut().find(|e| e.kind == EdgeKind::InstanceOf).unwrap();
    has.kind = EdgeKind::Has;
    assert!(KnowledgeGraph::from_parts(cross).is_err());

    let mut cyclic = good.clone();
    let nut = g.find_type("Nut").unwrap();
    let fastener = g.find_type("Fastener").unwrap();
    cyclic.edges.push(Edge {
        id: EdgeId(good.next_edge_id),
        source: fastener,
        dest: nut,
        kind: EdgeKind::Is,
    });
    cyclic.next_edge_id += 1;
    let err = KnowledgeGraph::from_parts(cyclic).unwrap_err();
    assert!(err.0.contains("cycle"), "{err}");

    let mut recount = good;
    recount.counters.insert("Nut".into(), 0);
    assert!(KnowledgeGraph::from_parts(recount).is_err());
}

#[test]
fn graph_is_send_and_sync() {
    fn assert_send_sync<T: Send + Sync>() {}
    assert_send_sync::<KnowledgeGraph>();
}
