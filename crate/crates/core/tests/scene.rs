#[path = "common/undo_ops.rs"]
mod undo_ops;

use proptest::prelude::*;
use remixd_core::csg::CsgOp;
use remixd_core::primitives::PrimitiveKind;
use remixd_core::scene::{load_scene, save_scene, NodeKind, PlaceSource, Scene, SceneError};
use remixd_core::stl::{write_stl, StlFormat};
use remixd_core::transform::Transform;
use remixd_core::{synth, Vec3};
use undo_ops::{apply, check_undo_sequence, op, Op};

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, ..ProptestConfig::default() })]

    #[test]
    fn undo_restores_every_snapshot(ops in prop::collection::vec(op(), 0..=50)) {
        check_undo_sequence(&ops)?;
    }

    #[test]
    fn save_load_roundtrip_is_deep_equal(ops in prop::collection::vec(op(), 0..=20)) {
        let mut scene = Scene::new("roundtrip");
        for op in ops.iter().filter(|o| !matches!(o, Op::Undo)) {
            let _ = apply(&mut scene, op);
        }
        let loaded = load_scene(&save_scene(&scene)).unwrap();
        prop_assert_eq!(&loaded, &scene);
        prop_assert_eq!(save_scene(&loaded), save_scene(&scene));
    }
}

#[test]
fn csg_consumes_models_and_keeps_environment() {
    let mut scene = Scene::new("s");
    let stl = write_stl(&synth::box_mesh(Vec3::new(-50.0, -50.0, -10.0), Vec3::new(50.0, 50.0, 0.0)), StlFormat::Binary)
        .unwrap();
    let (table, warnings) = scene.import_environment(&stl, Transform::identity(), "table").unwrap();
    assert!(warnings.is_empty());
    let cube = scene
        .place(&PlaceSource::Primitive(PrimitiveKind::Cube { edge: 10.0 }), Transform::identity())
        .unwrap();
    let result = scene.apply_csg(CsgOp::Difference, cube, table).unwrap();
    let ids: Vec<u64> = scene.nodes.iter().map(|n| n.id).collect();
    assert_eq!(ids, [table, result]);
    let node = scene.node(result).unwrap();
    assert_eq!(node.kind, NodeKind::Model);
    assert!((node.world_mesh().signed_volume() - 500.0).abs() < 1e-6);
    scene.undo().unwrap();
    let ids: Vec<u64> = scene.nodes.iter().map(|n| n.id).collect();
    assert_eq!(ids, [table, cube]);
}

#[test]
fn environment_nodes_cannot_be_exported() {
    let mut scene = Scene::new("s");
    let stl = write_stl(&synth::box_mesh(Vec3::zeros(), Vec3::repeat(5.0)), StlFormat::Binary).unwrap();
    let (env, _) = scene.import_environment(&stl, Transform::identity(), "shelf").unwrap();
    assert!(matches!(scene.export_node_stl(env), Err(SceneError::NotExportable(_))));
    let dup = scene.duplicate(env).unwrap();
    assert_eq!(scene.node(dup).unwrap().kind, NodeKind::Model);
    assert!(scene.export_node_stl(dup).is_ok());
}

#[test]
fn node_ids_are_never_reused() {
    let mut scene = Scene::new("s");
    let a = scene
        .place(&PlaceSource::Primitive(PrimitiveKind::Cube { edge: 1.0 }), Transform::identity())
        .unwrap();
    scene.undo().unwrap();
    let b = scene
        .place(&PlaceSource::Primitive(PrimitiveKind::Cube { edge: 1.0 }), Transform::identity())
        .unwrap();
    assert_ne!(a, b);
    let reloaded = load_scene(&save_scene(&scene)).unwrap();
    assert_eq!(reloaded.next_id(), scene.next_id());
}

#[test]
fn corrupt_scene_files_are_rejected() {
    assert!(matches!(load_scene(b"{"), Err(SceneError::Corrupt(_))));
    let mut v: serde_json::Value = serde_json::from_slice(&save_scene(&Scene::new("x"))).unwrap();
    v["version"] = 99.into();
    assert!(matches!(
        load_scene(&serde_json::to_vec(&v).unwrap()),
        Err(SceneError::Version { .. })
    ));
}
