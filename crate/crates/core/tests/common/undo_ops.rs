//! Random scene edit sequences shared by the scene tests and the
//! acceptance suite.

use proptest::prelude::*;
use remixd_core::csg::CsgOp;
use remixd_core::primitives::PrimitiveKind;
use remixd_core::scene::{PlaceSource, Scene, SceneError, SCENE_TOLERANCE};
use remixd_core::stl::{write_stl, StlFormat};
use remixd_core::transform::Transform;
use remixd_core::{synth, Vec3};

#[derive(Debug, Clone)]
pub enum Op {
    Gather(u8),
    RemoveGathered(u8),
    PlaceGathered(u8, [f64; 3]),
    PlacePrimitive(u8, [f64; 3]),
    SetTransform(u8, [f64; 3], f64),
    Duplicate(u8),
    Csg(u8, u8, u8),
    Environment([f64; 3]),
    Undo,
}

pub fn op() -> impl Strategy<Value = Op> {
    let v = || prop::array::uniform3(-20.0..20.0f64);
    prop_oneof![
        any::<u8>().prop_map(Op::Gather),
        any::<u8>().prop_map(Op::RemoveGathered),
        (any::<u8>(), v()).prop_map(|(i, t)| Op::PlaceGathered(i, t)),
        (any::<u8>(), v()).prop_map(|(i, t)| Op::PlacePrimitive(i, t)),
        (any::<u8>(), v(), 0.5..2.0f64).prop_map(|(i, t, s)| Op::SetTransform(i, t, s)),
        any::<u8>().prop_map(Op::Duplicate),
        (any::<u8>(), any::<u8>(), any::<u8>()).prop_map(|(a, b, o)| Op::Csg(a, b, o)),
        v().prop_map(Op::Environment),
        Just(Op::Undo),
        Just(Op::Undo),
    ]
}

fn primitive(i: u8) -> PrimitiveKind {
    match i % 3 {
        0 => PrimitiveKind::Cube { edge: 8.0 },
        1 => PrimitiveKind::Pyramid { base_edge: 10.0, height: 6.0 },
        _ => PrimitiveKind::Cylinder { radius: 4.0, height: 10.0, segments: 12 },
    }
}

/// An existing node id, or an unused one when `i` lands past the end.
fn node_id(scene: &Scene, i: u8) -> u64 {
    let n = scene.nodes.len();
    match (i as usize) % (n + 1) {
        k if k < n => scene.nodes[k].id,
        _ => scene.next_id() + 7,
    }
}

pub fn apply(scene: &mut Scene, op: &Op) -> Result<(), SceneError> {
    match op {
        Op::Gather(i) => {
            let mesh = synth::box_mesh(Vec3::zeros(), Vec3::repeat(4.0 + (*i % 5) as f64));
            scene.gather_mesh(&format!("entry-{i}"), "Box", &mesh)
        }
        Op::RemoveGathered(i) => {
            let idx = *i as usize % (scene.gathered.len() + 1);
            scene.remove_gathered(idx).map(|_| ())
        }
        Op::PlaceGathered(i, t) => {
            let idx = *i as usize % (scene.gathered.len() + 1);
            scene
                .place(&PlaceSource::Gathered(idx), Transform::from_translation(Vec3::from(*t)))
                .map(|_| ())
        }
        Op::PlacePrimitive(i, t) => scene
            .place(&PlaceSource::Primitive(primitive(*i)), Transform::from_translation(Vec3::from(*t)))
            .map(|_| ()),
        Op::SetTransform(i, t, s) => {
            let tf = Transform::from_euler_deg(0.0, 0.0, t[0] * 9.0)
                .with_translation(Vec3::from(*t))
                .unwrap()
                .with_scale(Vec3::repeat(*s))
                .unwrap();
            scene.set_transform(node_id(scene, *i), tf)
        }
        Op::Duplicate(i) => scene.duplicate(node_id(scene, *i)).map(|_| ()),
        Op::Csg(a, b, o) => {
            let op = [CsgOp::Union, CsgOp::Difference, CsgOp::Intersection][*o as usize % 3];
            scene.apply_csg(op, node_id(scene, *a), node_id(scene, *b)).map(|_| ())
        }
        Op::Environment(t) => {
            let stl = write_stl(&synth::box_mesh(Vec3::zeros(), Vec3::new(30.0, 20.0, 2.0)), StlFormat::Binary).unwrap();
            scene
                .import_environment(&stl, Transform::from_translation(Vec3::from(*t)), "table")
                .map(|_| ())
        }
        Op::Undo => unreachable!(),
    }
}

/// Replays `ops`, checking after every undo that the scene equals the
/// snapshot taken before the mutation being reverted, and that rejected
/// mutations change nothing. Returns how many mutations were accepted.
pub fn check_undo_sequence(ops: &[Op]) -> Result<usize, TestCaseError> {
    let mut scene = Scene::new("prop");
    let mut snapshots: Vec<Scene> = Vec::new();
    let mut accepted = 0;
    for op in ops {
        if let Op::Undo = op {
            match snapshots.pop() {
                Some(before) => {
                    scene.undo().map_err(|e| TestCaseError::fail(format!("undo failed: {e}")))?;
                    prop_assert!(scene.approx_eq(&before, SCENE_TOLERANCE), "undo did not restore snapshot");
                }
                None => prop_assert!(matches!(scene.undo(), Err(SceneError::NothingToUndo))),
            }
            continue;
        }
        let before = scene.clone();
        match apply(&mut scene, op) {
            Ok(()) => {
                accepted += 1;
                snapshots.push(before);
            }
            Err(_) => prop_assert!(scene == before, "failed {op:?} changed the scene"),
        }
        prop_assert_eq!(scene.undo_stack.len(), snapshots.len());
        prop_assert!(scene.provenance_is_acyclic());
    }
    while let Some(before) = snapshots.pop() {
        scene.undo().map_err(|e| TestCaseError::fail(format!("undo failed: {e}")))?;
        prop_assert!(scene.approx_eq(&before, SCENE_TOLERANCE));
    }
    prop_assert!(scene.approx_eq(&Scene::new("prop"), SCENE_TOLERANCE));
    Ok(accepted)
}
