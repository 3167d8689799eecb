//! Deterministic procedural meshes used for fixtures, benches and stress
//! tests. They stand in for scanned or downloaded geometry.

use std::f64::consts::PI;

use crate::mesh::{TriangleMesh, Vec3};

/// Closed UV sphere with pole vertices: `2 * segments * (stacks - 1)`
/// triangles. `bump` is a relative radial ripple amplitude (0 for a plain
/// sphere), giving organic, scan-like curvature.
pub fn uv_sphere(radius: f64, segments: usize, stacks: usize, bump: f64) -> TriangleMesh {
    assert!(segments >= 3 && stacks >= 2);
    let r_at = |theta: f64, phi: f64| radius * (1.0 + bump * (5.0 * theta).sin() * (4.0 * phi).sin());
    let mut vertices = Vec::with_capacity(segments * (stacks - 1) + 2);
    vertices.push(Vec3::new(0.0, 0.0, -r_at(PI, 0.0)));
    for i in 1..stacks {
        let theta = PI - PI * i as f64 / stacks as f64;
        for j in 0..segments {
            let phi = 2.0 * PI * j as f64 / segments as f64;
            let r = r_at(theta, phi);
            vertices.push(Vec3::new(
                r * theta.sin() * phi.cos(),
                r * theta.sin() * phi.sin(),
                r * theta.cos(),
            ));
        }
    }
    vertices.push(Vec3::new(0.0, 0.0, r_at(0.0, 0.0)));
    let top = (vertices.len() - 1) as u32;
    let ring = |i: usize, j: usize| (1 + (i - 1) * segments + j % segments) as u32;

    let mut triangles = Vec::with_capacity(2 * segments * (stacks - 1));
    for j in 0..segments {
        triangles.push([0, ring(1, j + 1), ring(1, j)]);
    }
    for i in 1..stacks - 1 {
        for j in 0..segments {
            let (a, b) = (ring(i, j), ring(i, j + 1));
            let (c, d) = (ring(i + 1, j), ring(i + 1, j + 1));
            triangles.push([a, b, d]);
            triangles.push([a, d, c]);
        }
    }
    for j in 0..segments {
        triangles.push([top, ring(stacks - 1, j), ring(stacks - 1, j + 1)]);
    }
    TriangleMesh { vertices, triangles }
}

/// The dense scan used by the auto-simplification path: 699,000 triangles,
/// about 80 mm across.
pub fn dense_scan() -> TriangleMesh {
    uv_sphere(40.0, 750, 467, 0.04)
}

/// Closed torus around the z axis.
pub fn torus(major: f64, minor: f64, segments: usize, sides: usize) -> TriangleMesh {
    let mut vertices = Vec::with_capacity(segments * sides);
    for i in 0..segments {
        let u = 2.0 * PI * i as f64 / segments as f64;
        for j in 0..sides {
            let v = 2.0 * PI * j as f64 / sides as f64;
            let r = major + minor * v.cos();
            vertices.push(Vec3::new(r * u.cos(), r * u.sin(), minor * v.sin()));
        }
    }
    let idx = |i: usize, j: usize| ((i % segments) * sides + j % sides) as u32;
    let mut triangles = Vec::with_capacity(2 * segments * sides);
    for i in 0..segments {
        for j in 0..sides {
            let (a, b, c, d) = (idx(i, j), idx(i + 1, j), idx(i + 1, j + 1), idx(i, j + 1));
            triangles.push([a, b, c]);
            triangles.push([a, c, d]);
        }
    }
    TriangleMesh { vertices, triangles }
}

/// Axis-aligned box spanning `min..max`, outward wound.
pub fn box_mesh(min: Vec3, max: Vec3) -> TriangleMesh {
    let c = |i: usize| {
        Vec3::new(
            if i & 1 == 0 { min.x } else { max.x },
            if i & 2 == 0 { min.y } else { max.y },
            if i & 4 == 0 { min.z } else { max.z },
        )
    };
    TriangleMesh {
        vertices: (0..8).map(c).collect(),
        triangles: vec![
            [0, 2, 3],
            [0, 3, 1],
            [4, 5, 7],
            [4, 7, 6],
            [0, 1, 5],
            [0, 5, 4],
            [1, 3, 7],
            [1, 7, 5],
            [3, 2, 6],
            [3, 6, 7],
            [2, 0, 4],
            [2, 4, 6],
        ],
    }
}

/// Closed solid between a bottom outline at `z0` and a top outline at `z1`.
/// Outlines are counter-clockwise, equally long and star-shaped around the
/// origin; caps are fanned from a center vertex.
pub fn loft(bottom: &[[f64; 2]], top: &[[f64; 2]], z0: f64, z1: f64) -> TriangleMesh {
    let n = bottom.len();
    assert!(n >= 3 && top.len() == n && z1 > z0);
    let mut vertices: Vec<Vec3> = bottom.iter().map(|p| Vec3::new(p[0], p[1], z0)).collect();
    vertices.extend(top.iter().map(|p| Vec3::new(p[0], p[1], z1)));
    let (cb, ct) = (2 * n as u32, 2 * n as u32 + 1);
    vertices.push(Vec3::new(0.0, 0.0, z0));
    vertices.push(Vec3::new(0.0, 0.0, z1));
    let mut triangles = Vec::with_capacity(4 * n);
    for i in 0..n {
        let (a, b) = (i as u32, ((i + 1) % n) as u32);
        let (ta, tb) = (a + n as u32, b + n as u32);
        triangles.push([a, b, tb]);
        triangles.push([a, tb, ta]);
        triangles.push([cb, b, a]);
        triangles.push([ct, ta, tb]);
    }
    TriangleMesh { vertices, triangles }
}

/// Straight extrusion of `outline` between `z0` and `z1`.
pub fn prism(outline: &[[f64; 2]], z0: f64, z1: f64) -> TriangleMesh {
    loft(outline, outline, z0, z1)
}

/// `n` points on a circle of radius `r`, counter-clockwise from +x.
pub fn circle(r: f64, n: usize) -> Vec<[f64; 2]> {
    (0..n)
        .map(|i| {
            let a = 2.0 * PI * i as f64 / n as f64;
            [r * a.cos(), r * a.sin()]
        })
        .collect()
}
