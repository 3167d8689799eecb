//! The four built-in solids: cube, sphere, pyramid, cylinder.
//!
//! Every primitive is watertight, outward wound and centered on its bounding
//! box center at the origin. Cylinders and pyramids stand along +z.

use std::collections::HashMap;
use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum PrimitiveKind {
    Cube { edge: f64 },
    /// Icosphere; each subdivision level quadruples the 20 base faces.
    Sphere { radius: f64, subdivisions: u32 },
    /// Square base of side `base_edge`, apex `height` above the base.
    Pyramid { base_edge: f64, height: f64 },
    Cylinder { radius: f64, height: f64, segments: u32 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PrimitiveError {
    #[error("dimension `{0}` must be positive and finite")]
    NonPositive(&'static str),
    #[error("`{0}` must be at least 3")]
    TooCoarse(&'static str),
    #[error("sphere subdivision level {0} is too large")]
    TooFine(u32),
}

const MAX_SPHERE_SUBDIVISIONS: u32 = 7;

impl PrimitiveKind {
    pub fn validate(&self) -> Result<(), PrimitiveError> {
        let positive = |v: f64, name| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(PrimitiveError::NonPositive(name))
            }
        };
        match *self {
            PrimitiveKind::Cube { edge } => positive(edge, "edge"),
            PrimitiveKind::Sphere { radius, subdivisions } => {
                positive(radius, "radius")?;
                if subdivisions < 3 {
                    return Err(PrimitiveError::TooCoarse("subdivisions"));
                }
                if subdivisions > MAX_SPHERE_SUBDIVISIONS {
                    return Err(PrimitiveError::TooFine(subdivisions));
                }
                Ok(())
            }
            PrimitiveKind::Pyramid { base_edge, height } => {
                positive(base_edge, "base_edge")?;
                positive(height, "height")
            }
            PrimitiveKind::Cylinder { radius, height, segments } => {
                positive(radius, "radius")?;
                positive(height, "height")?;
                if segments < 3 {
                    return Err(PrimitiveError::TooCoarse("segments"));
                }
                Ok(())
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PrimitiveKind::Cube { .. } => "cube",
            PrimitiveKind::Sphere { .. } => "sphere",
            PrimitiveKind::Pyramid { .. } => "pyramid",
            PrimitiveKind::Cylinder { .. } => "cylinder",
        }
    }
}

pub fn make_primitive(kind: &PrimitiveKind) -> Result<TriangleMesh, PrimitiveError> {
    kind.validate()?;
    Ok(match *kind {
        PrimitiveKind::Cube { edge } => cube(edge),
        PrimitiveKind::Sphere { radius, subdivisions } => icosphere(radius, subdivisions),
        PrimitiveKind::Pyramid { base_edge, height } => pyramid(base_edge, height),
        PrimitiveKind::Cylinder { radius, height, segments } => cylinder(radius, height, segments),
    })
}

fn cube(edge: f64) -> TriangleMesh {
    let h = edge / 2.0;
    let vertices = (0..8)
        .map(|i| {
            Vec3::new(
                if i & 1 == 0 { -h } else { h },
                if i & 2 == 0 { -h } else { h },
                if i & 4 == 0 { -h } else { h },
            )
        })
        .collect();
    // Corner i has bits (x, y, z).
    let quads: [[u32; 4]; 6] = [
        [0, 2, 3, 1], // -z
        [4, 5, 7, 6], // +z
        [0, 1, 5, 4], // -y
        [2, 6, 7, 3], // +y
        [0, 4, 6, 2], // -x
        [1, 3, 7, 5], // +x
    ];
    let triangles = quads
        .iter()
        .flat_map(|q| [[q[0], q[1], q[2]], [q[0], q[2], q[3]]])
        .collect();
    TriangleMesh { vertices, triangles }
}

fn pyramid(base: f64, height: f64) -> TriangleMesh {
    let h = base / 2.0;
    let z0 = -height / 2.0;
    let vertices = vec![
        Vec3::new(-h, -h, z0),
        Vec3::new(h, -h, z0),
        Vec3::new(h, h, z0),
        Vec3::new(-h, h, z0),
        Vec3::new(0.0, 0.0, height / 2.0),
    ];
    let triangles = vec![[0, 2, 1], [0, 3, 2], [0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]];
    TriangleMesh { vertices, triangles }
}

fn cylinder(radius: f64, height: f64, segments: u32) -> TriangleMesh {
    let n = segments;
    let (z0, z1) = (-height / 2.0, height / 2.0);
    let mut vertices = Vec::with_capacity(2 * n as usize + 2);
    for z in [z0, z1] {
        for i in 0..n {
            let a = TAU * i as f64 / n as f64;
            vertices.push(Vec3::new(radius * a.cos(), radius * a.sin(), z));
        }
    }
    let bottom_center = vertices.len() as u32;
    vertices.push(Vec3::new(0.0, 0.0, z0));
    let top_center = bottom_center + 1;
    vertices.push(Vec3::new(0.0, 0.0, z1));

    let mut triangles = Vec::with_capacity(4 * n as usize);
    for i in 0..n {
        let j = (i + 1) % n;
        let (b0, b1, t0, t1) = (i, j, n + i, n + j);
        triangles.push([b0, b1, t1]);
        triangles.push([b0, t1, t0]);
        triangles.push([bottom_center, b1, b0]);
        triangles.push([top_center, t0, t1]);
    }
    TriangleMesh { vertices, triangles }
}

fn icosphere(radius: f64, subdivisions: u32) -> TriangleMesh {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut mid = |a: u32, b: u32, vertices: &mut Vec<Vec3>| -> u32 {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                vertices.push(((vertices[a as usize] + vertices[b as usize]) * 0.5).normalize());
                vertices.len() as u32 - 1
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for &[a, b, c] in &triangles {
            let ab = mid(a, b, &mut vertices);
            let bc = mid(b, c, &mut vertices);
            let ca = mid(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }
    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh { vertices, triangles }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn all_kinds() -> Vec<PrimitiveKind> {
        vec![
            PrimitiveKind::Cube { edge: 2.0 },
            PrimitiveKind::Sphere { radius: 1.0, subdivisions: 3 },
            PrimitiveKind::Pyramid { base_edge: 3.0, height: 4.0 },
            PrimitiveKind::Cylinder { radius: 5.0, height: 10.0, segments: 64 },
        ]
    }

    #[test]
    fn cube_edge_two_has_volume_eight() {
        let m = make_primitive(&PrimitiveKind::Cube { edge: 2.0 }).unwrap();
        assert_eq!(m.signed_volume(), 8.0);
        assert_eq!(m.triangle_count(), 12);
    }

    #[test]
    fn cylinder_volume_matches_tessellation_deficit() {
        let n = 64.0;
        let m = make_primitive(&PrimitiveKind::Cylinder { radius: 5.0, height: 10.0, segments: 64 }).unwrap();
        let analytic = PI * 25.0 * 10.0;
        let deficit = n / (2.0 * PI) * (2.0 * PI / n).sin();
        assert!((m.signed_volume() - analytic * deficit).abs() < 1e-9);
        assert!((m.signed_volume() - analytic).abs() / analytic < 0.005);
    }

    #[test]
    fn sphere_three_subdivisions_is_closed() {
        let m = make_primitive(&PrimitiveKind::Sphere { radius: 1.0, subdivisions: 3 }).unwrap();
        assert_eq!(m.triangle_count(), 1280);
        assert!(m.is_watertight());
    }

    #[test]
    fn pyramid_volume_is_a_third_base_times_height() {
        let m = make_primitive(&PrimitiveKind::Pyramid { base_edge: 3.0, height: 4.0 }).unwrap();
        assert!((m.signed_volume() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn every_primitive_is_watertight_positive_and_centered() {
        for kind in all_kinds() {
            let m = make_primitive(&kind).unwrap();
            assert!(m.is_watertight(), "{kind:?}");
            assert!(m.signed_volume() > 0.0, "{kind:?}");
            let c = m.bounds().unwrap().center();
            assert!(c.norm() < 1e-9, "{kind:?} center {c:?}");
        }
    }

    #[test]
    fn invalid_dimensions_are_rejected() {
        assert_eq!(
            make_primitive(&PrimitiveKind::Cube { edge: 0.0 }),
            Err(PrimitiveError::NonPositive("edge"))
        );
        assert_eq!(
            make_primitive(&PrimitiveKind::Cylinder { radius: 1.0, height: 1.0, segments: 2 }),
            Err(PrimitiveError::TooCoarse("segments"))
        );
        assert!(make_primitive(&PrimitiveKind::Sphere { radius: f64::NAN, subdivisions: 3 }).is_err());
    }

    #[test]
    fn serde_shape_is_tagged() {
        let json = serde_json::to_string(&PrimitiveKind::Cylinder { radius: 20.0, height: 60.0, segments: 64 }).unwrap();
        assert_eq!(json, r#"{"kind":"cylinder","radius":20.0,"height":60.0,"segments":64}"#);
    }
}
