use std::f64::consts::PI;

use proptest::prelude::*;
use remixd_core::csg::{csg, subtract_fixture, CsgOp, MAX_INPUT_TRIANGLES};
use remixd_core::primitives::{make_primitive, PrimitiveKind};
use remixd_core::transform::{apply_transform, Transform};
use remixd_core::{synth, TriangleMesh, Vec3};

fn kind() -> impl Strategy<Value = PrimitiveKind> {
    prop_oneof![
        (4.0..20.0f64).prop_map(|edge| PrimitiveKind::Cube { edge }),
        (3.0..10.0f64).prop_map(|radius| PrimitiveKind::Sphere { radius, subdivisions: 3 }),
        (4.0..20.0f64, 4.0..20.0f64).prop_map(|(base_edge, height)| PrimitiveKind::Pyramid { base_edge, height }),
        (2.0..10.0f64, 4.0..20.0f64, 6u32..40)
            .prop_map(|(radius, height, segments)| PrimitiveKind::Cylinder { radius, height, segments }),
    ]
}

fn placed() -> impl Strategy<Value = (PrimitiveKind, [f64; 3], [f64; 3])> {
    (kind(), prop::array::uniform3(-6.0..6.0f64), prop::array::uniform3(0.0..360.0f64))
}

fn build((k, t, r): &(PrimitiveKind, [f64; 3], [f64; 3])) -> TriangleMesh {
    let tf = Transform::from_euler_deg(r[0], r[1], r[2])
        .with_translation(Vec3::from(*t))
        .unwrap();
    apply_transform(&make_primitive(k).unwrap(), &tf)
}

/// Closed-form volume of each primitive (faceted where the mesh is).
fn analytic_volume(k: &PrimitiveKind) -> Option<f64> {
    match *k {
        PrimitiveKind::Cube { edge } => Some(edge.powi(3)),
        PrimitiveKind::Pyramid { base_edge, height } => Some(base_edge * base_edge * height / 3.0),
        PrimitiveKind::Cylinder { radius, height, segments } => {
            let n = segments as f64;
            Some(0.5 * n * radius * radius * (2.0 * PI / n).sin() * height)
        }
        PrimitiveKind::Sphere { .. } => None,
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, ..ProptestConfig::default() })]

    #[test]
    fn primitive_meshes_match_closed_forms(k in kind()) {
        let m = make_primitive(&k).unwrap();
        prop_assert!(m.is_watertight());
        if let Some(v) = analytic_volume(&k) {
            prop_assert!((m.signed_volume() - v).abs() <= 1e-9 * v, "{} vs {v}", m.signed_volume());
        }
    }

    #[test]
    fn volume_identities_hold(a in placed(), b in placed()) {
        let (ma, mb) = (build(&a), build(&b));
        let (va, vb) = (ma.signed_volume(), mb.signed_volume());
        let union = csg(CsgOp::Union, &ma, &mb).unwrap().mesh;
        let inter = csg(CsgOp::Intersection, &ma, &mb).unwrap().mesh;
        let diff = csg(CsgOp::Difference, &ma, &mb).unwrap().mesh;
        let (vu, vi, vd) = (union.signed_volume(), inter.signed_volume(), diff.signed_volume());
        let scale = va + vb;
        prop_assert!((vu + vi - scale).abs() <= 1e-3 * scale, "inclusion-exclusion {vu} + {vi} vs {scale}");
        prop_assert!((vd + vi - va).abs() <= 1e-3 * scale, "partition {vd} + {vi} vs {va}");
        prop_assert!(vi <= va.min(vb) * (1.0 + 1e-3) && vu >= va.max(vb) * (1.0 - 1e-3));
        for m in [&union, &inter, &diff] {
            prop_assert!(m.is_empty() || m.is_watertight());
        }
    }

    #[test]
    fn self_difference_is_empty(a in placed()) {
        let m = build(&a);
        prop_assert!(csg(CsgOp::Difference, &m, &m).unwrap().mesh.signed_volume().abs() < 1e-9);
    }

    #[test]
    fn union_and_intersection_commute_in_volume(a in placed(), b in placed()) {
        let (ma, mb) = (build(&a), build(&b));
        for op in [CsgOp::Union, CsgOp::Intersection] {
            let ab = csg(op, &ma, &mb).unwrap().mesh.signed_volume();
            let ba = csg(op, &mb, &ma).unwrap().mesh.signed_volume();
            prop_assert!((ab - ba).abs() <= 1e-3 * (ab.abs() + 1.0));
        }
    }
}

#[test]
fn difference_depends_on_operand_order() {
    let big = synth::box_mesh(Vec3::repeat(-10.0), Vec3::repeat(10.0));
    let small = synth::box_mesh(Vec3::new(5.0, -2.0, -2.0), Vec3::new(15.0, 2.0, 2.0));
    let a = csg(CsgOp::Difference, &big, &small).unwrap().mesh.signed_volume();
    let b = csg(CsgOp::Difference, &small, &big).unwrap().mesh.signed_volume();
    assert!((a - (8000.0 - 80.0)).abs() < 1e-6, "{a}");
    assert!((b - 80.0).abs() < 1e-6, "{b}");
}

#[test]
fn fixture_subtraction_leaves_a_notch() {
    let slab = synth::box_mesh(Vec3::new(-5.0, -100.0, -18.0), Vec3::new(195.0, 100.0, 0.0));
    let block = synth::box_mesh(Vec3::new(-20.0, -10.0, -30.0), Vec3::new(20.0, 10.0, 10.0));
    let r = subtract_fixture(&block, &slab).unwrap().mesh;
    assert!(r.is_watertight());
    // 25 x 20 x 18 removed from 40 x 20 x 40.
    assert!((r.signed_volume() - (32000.0 - 9000.0)).abs() < 1e-6, "{}", r.signed_volume());
}

#[test]
fn oversized_operands_are_refused() {
    let dense = synth::uv_sphere(10.0, 300, 200, 0.0);
    assert!(dense.triangle_count() > MAX_INPUT_TRIANGLES);
    let cube = synth::box_mesh(Vec3::repeat(-1.0), Vec3::repeat(1.0));
    assert!(csg(CsgOp::Union, &dense, &cube).is_err());
    assert!(csg(CsgOp::Union, &cube, &dense).is_err());
}

#[test]
fn boolean_output_survives_an_stl_roundtrip() {
    let ring = synth::torus(15.0, 4.0, 48, 16);
    let post = synth::box_mesh(Vec3::new(12.0, -3.0, -20.0), Vec3::new(18.0, 3.0, 20.0));
    let tilted = apply_transform(&post, &Transform::from_euler_deg(7.0, 11.0, 3.0));
    for op in [CsgOp::Union, CsgOp::Difference, CsgOp::Intersection] {
        let m = csg(op, &ring, &tilted).unwrap().mesh;
        assert!(m.is_watertight(), "{op:?}");
        let canon = remixd_core::stl::stl_canonical(&m);
        assert!(canon.is_watertight(), "{op:?} after roundtrip");
        assert_eq!(canon.triangle_count(), m.triangle_count(), "{op:?}");
    }
}
