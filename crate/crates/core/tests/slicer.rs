use std::f64::consts::PI;

use remixd_core::par::Execution;
use remixd_core::primitives::{make_primitive, PrimitiveKind};
use remixd_core::slicer::gcode::{extrusion_length, parse_gcode, Command};
use remixd_core::slicer::contour::slice_at;
use remixd_core::slicer::{layer_count, slice_to_gcode, SliceConfig};
use remixd_core::{synth, Vec3};

fn solid() -> SliceConfig {
    SliceConfig {
        infill_density: 1.0,
        ..SliceConfig::default()
    }
}

#[test]
fn ten_mm_cube_has_fifty_layers() {
    let cube = synth::box_mesh(Vec3::zeros(), Vec3::repeat(10.0));
    let out = slice_to_gcode(Execution::Sequential, &cube, &SliceConfig::default()).unwrap();
    assert_eq!(out.layers.len(), 50);
    assert_eq!(out.program.layer_count, 50);
    assert_eq!(layer_count(10.0, 0.2), 50);
    assert!(out.warnings.is_empty(), "{:?}", out.warnings);
}

#[test]
fn solid_infill_filament_tracks_mesh_volume() {
    for mesh in [
        synth::box_mesh(Vec3::zeros(), Vec3::repeat(10.0)),
        make_primitive(&PrimitiveKind::Cylinder { radius: 8.0, height: 12.0, segments: 64 }).unwrap(),
    ] {
        let out = slice_to_gcode(Execution::Sequential, &mesh, &solid()).unwrap();
        let v = mesh.signed_volume();
        let est = out.program.filament_volume_mm3;
        assert!((est - v).abs() / v < 0.10, "{est} vs {v}");
    }
}

#[test]
fn emitted_program_reparses_cleanly() {
    let sphere = make_primitive(&PrimitiveKind::Sphere { radius: 12.0, subdivisions: 4 }).unwrap();
    let out = slice_to_gcode(Execution::Sequential, &sphere, &SliceConfig::default()).unwrap();
    let text = out.program.to_text();
    let parsed = parse_gcode(&text).unwrap();
    assert_eq!(parsed.unknown_commands(), 0);
    assert!(parsed.extrusion_is_monotonic());
    assert_eq!(parsed.layer_count, out.layers.len());
    assert!(parsed.within_build_volume(SliceConfig::default().build_volume));
    // E is printed to 5 decimals; totals agree to that rounding per move.
    let moves = parsed.commands.iter().filter(|c| matches!(c, Command::Move { e: Some(_), .. })).count();
    assert!((parsed.total_extruded_mm - out.program.total_extruded_mm).abs() <= 1e-5 * moves as f64);
}

#[test]
fn single_extruding_move_matches_bead_formula() {
    let cfg = SliceConfig::default();
    let cube = synth::box_mesh(Vec3::zeros(), Vec3::repeat(10.0));
    let out = slice_to_gcode(Execution::Sequential, &cube, &cfg).unwrap();
    let area = PI * (cfg.filament_diameter / 2.0).powi(2);
    let (mut x, mut y, mut e) = (0.0, 0.0, 0.0);
    let mut checked = 0;
    for c in &out.program.commands {
        match c {
            Command::ResetExtruder(v) => e = *v,
            Command::Move { x: nx, y: ny, e: ne, .. } => {
                let (tx, ty) = (nx.unwrap_or(x), ny.unwrap_or(y));
                if let Some(ne) = ne {
                    if nx.is_some() || ny.is_some() {
                        let len = ((tx - x).powi(2) + (ty - y).powi(2)).sqrt();
                        let oracle = len * cfg.layer_height * cfg.extrusion_width / area;
                        assert!((ne - e - oracle).abs() < 1e-6, "{} vs {oracle}", ne - e);
                        assert!((extrusion_length(len, &cfg) - oracle).abs() < 1e-12);
                        checked += 1;
                    }
                    e = *ne;
                }
                (x, y) = (tx, ty);
            }
            _ => {}
        }
    }
    assert!(checked > 100);
}

#[test]
fn overhangs_get_supports_and_can_be_disabled() {
    // A T shape: the bar overhangs the post on both sides.
    let post = synth::box_mesh(Vec3::new(-2.0, -2.0, 0.0), Vec3::new(2.0, 2.0, 10.0));
    let bar = synth::box_mesh(Vec3::new(-10.0, -2.0, 10.0), Vec3::new(10.0, 2.0, 12.0));
    let t = remixd_core::csg::csg(remixd_core::csg::CsgOp::Union, &post, &bar).unwrap().mesh;
    let with = slice_to_gcode(Execution::Sequential, &t, &SliceConfig::default()).unwrap();
    assert!(with.layers.iter().take(45).any(|l| !l.support.is_empty()));
    let cfg = SliceConfig {
        support_enabled: false,
        ..SliceConfig::default()
    };
    let without = slice_to_gcode(Execution::Sequential, &t, &cfg).unwrap();
    assert!(without.layers.iter().all(|l| l.support.is_empty()));
    assert!(with.program.total_extruded_mm > without.program.total_extruded_mm);
}

#[test]
fn sequential_and_parallel_agree() {
    let sphere = make_primitive(&PrimitiveKind::Sphere { radius: 10.0, subdivisions: 4 }).unwrap();
    let a = slice_to_gcode(Execution::Sequential, &sphere, &SliceConfig::default()).unwrap();
    let b = slice_to_gcode(Execution::Parallel, &sphere, &SliceConfig::default()).unwrap();
    assert_eq!(a.program.to_text(), b.program.to_text());
}

#[test]
fn cross_section_of_cube_is_the_square() {
    let cube = synth::box_mesh(Vec3::zeros(), Vec3::repeat(10.0));
    let rings = slice_at(&cube, 5.0).unwrap();
    assert_eq!(rings.len(), 1);
    assert!((rings[0].signed_area() - 100.0).abs() < 1e-9);
}
