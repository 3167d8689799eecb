//! Indexed triangle meshes, the geometry currency shared by every stage of the
//! remix pipeline.
//!
//! Coordinates are millimeters. Triangles are wound counter-clockwise when
//! viewed from outside, so outward-oriented closed meshes have a positive
//! [`signed_volume`](TriangleMesh::signed_volume).

use std::collections::HashMap;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// 3D point or vector in millimeters.
pub type Vec3 = Vector3<f64>;

/// Triangles with an area below this (mm²) are degenerate.
pub const DEGENERATE_AREA: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MeshError {
    #[error("triangle {triangle} references vertex {index}, but the mesh has {vertex_count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        vertex_count: usize,
    },
    #[error("triangle {triangle} repeats a vertex index")]
    RepeatedIndex { triangle: usize },
    #[error("vertex {vertex} has a non-finite coordinate")]
    NonFinite { vertex: usize },
    #[error("mesh is empty")]
    Empty,
}

/// Indexed triangle set.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vec3>) -> Option<Self> {
        let mut iter = points.into_iter();
        let first = *iter.next()?;
        let mut bounds = Aabb {
            min: first,
            max: first,
        };
        for p in iter {
            bounds.min = bounds.min.inf(p);
            bounds.max = bounds.max.sup(p);
        }
        Some(bounds)
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        self.extent().norm()
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn inflated(&self, margin: f64) -> Aabb {
        let m = Vec3::repeat(margin);
        Aabb {
            min: self.min - m,
            max: self.max + m,
        }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn intersects(&self, other: &Aabb) -> bool {
        (0..3).all(|i| self.min[i] <= other.max[i] && other.min[i] <= self.max[i])
    }
}

/// Edge-usage summary produced by [`TriangleMesh::watertight_report`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeReport {
    /// Undirected edges used by exactly one triangle.
    pub boundary_edges: Vec<[u32; 2]>,
    /// Undirected edges used by more than two triangles.
    pub non_manifold_edges: Vec<[u32; 2]>,
    /// Edges used twice but in the same direction (inconsistent winding).
    pub inconsistent_edges: Vec<[u32; 2]>,
}

impl EdgeReport {
    pub fn is_watertight(&self) -> bool {
        self.boundary_edges.is_empty()
            && self.non_manifold_edges.is_empty()
            && self.inconsistent_edges.is_empty()
    }
}

#[derive(Default, Clone, Copy)]
struct EdgeUse {
    forward: u32,
    backward: u32,
}

impl TriangleMesh {
    /// Builds a mesh and checks its structural invariants.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let mesh = TriangleMesh {
            vertices,
            triangles,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn validate(&self) -> Result<(), MeshError> {
        for (i, v) in self.vertices.iter().enumerate() {
            if !v.iter().all(|c| c.is_finite()) {
                return Err(MeshError::NonFinite { vertex: i });
            }
        }
        let n = self.vertices.len();
        for (t, tri) in self.triangles.iter().enumerate() {
            for &idx in tri {
                if idx as usize >= n {
                    return Err(MeshError::IndexOutOfRange {
                        triangle: t,
                        index: idx,
                        vertex_count: n,
                    });
                }
            }
            if tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2] {
                return Err(MeshError::RepeatedIndex { triangle: t });
            }
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn corners(&self, t: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[t];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized face normal (length = twice the area).
    pub fn face_cross(&self, t: usize) -> Vec3 {
        let [a, b, c] = self.corners(t);
        (b - a).cross(&(c - a))
    }

    pub fn face_normal(&self, t: usize) -> Vec3 {
        let n = self.face_cross(t);
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            Vec3::zeros()
        }
    }

    pub fn triangle_area(&self, t: usize) -> f64 {
        0.5 * self.face_cross(t).norm()
    }

    pub fn surface_area(&self) -> f64 {
        (0..self.triangles.len()).map(|t| self.triangle_area(t)).sum()
    }

    /// Divergence-theorem volume: sum of det(v0, v1, v2) / 6 over all
    /// triangles. Only meaningful for closed meshes.
    pub fn signed_volume(&self) -> f64 {
        self.triangles
            .iter()
            .map(|&[a, b, c]| {
                let (a, b, c) = (
                    &self.vertices[a as usize],
                    &self.vertices[b as usize],
                    &self.vertices[c as usize],
                );
                a.dot(&b.cross(c))
            })
            .sum::<f64>()
            / 6.0
    }

    pub fn bounds(&self) -> Result<Aabb, MeshError> {
        Aabb::from_points(&self.vertices).ok_or(MeshError::Empty)
    }

    /// Classifies every undirected edge by how many triangles use it and in
    /// which direction.
    pub fn watertight_report(&self) -> EdgeReport {
        let mut uses: HashMap<(u32, u32), EdgeUse> = HashMap::with_capacity(self.triangles.len() * 2);
        for tri in &self.triangles {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let entry = uses.entry((a.min(b), a.max(b))).or_default();
                if a < b {
                    entry.forward += 1;
                } else {
                    entry.backward += 1;
                }
            }
        }
        let mut report = EdgeReport::default();
        for (&(a, b), u) in &uses {
            let total = u.forward + u.backward;
            if total == 1 {
                report.boundary_edges.push([a, b]);
            } else if total > 2 {
                report.non_manifold_edges.push([a, b]);
            } else if u.forward != 1 {
                report.inconsistent_edges.push([a, b]);
            }
        }
        report.boundary_edges.sort_unstable();
        report.non_manifold_edges.sort_unstable();
        report.inconsistent_edges.sort_unstable();
        report
    }

    /// True iff every undirected edge is used by exactly two triangles with
    /// opposite directions.
    pub fn is_watertight(&self) -> bool {
        !self.is_empty() && self.watertight_report().is_watertight()
    }

    /// Same mesh with every triangle's winding reversed.
    pub fn flipped(&self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: self.triangles.iter().map(|&[a, b, c]| [a, c, b]).collect(),
        }
    }

    pub fn translated(&self, offset: Vec3) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.iter().map(|v| v + offset).collect(),
            triangles: self.triangles.clone(),
        }
    }

    /// Disjoint concatenation of two meshes.
    pub fn merged(&self, other: &TriangleMesh) -> TriangleMesh {
        let offset = self.vertices.len() as u32;
        let mut vertices = self.vertices.clone();
        vertices.extend_from_slice(&other.vertices);
        let mut triangles = self.triangles.clone();
        triangles.extend(
            other
                .triangles
                .iter()
                .map(|t| [t[0] + offset, t[1] + offset, t[2] + offset]),
        );
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Drops vertices not referenced by any triangle, renumbering the rest in
    /// order of first use.
    pub fn compacted(&self) -> TriangleMesh {
        let mut remap = vec![u32::MAX; self.vertices.len()];
        let mut vertices = Vec::with_capacity(self.vertices.len());
        let triangles = self
            .triangles
            .iter()
            .map(|tri| {
                tri.map(|i| {
                    let slot = &mut remap[i as usize];
                    if *slot == u32::MAX {
                        *slot = vertices.len() as u32;
                        vertices.push(self.vertices[i as usize]);
                    }
                    *slot
                })
            })
            .collect();
        TriangleMesh {
            vertices,
            triangles,
        }
    }

    /// Groups triangles into edge-connected components. Returned triangle
    /// index lists are sorted and the components ordered by their first
    /// triangle.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut parent: Vec<usize> = (0..self.triangles.len()).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        let mut first_user: HashMap<(u32, u32), usize> = HashMap::new();
        for (t, tri) in self.triangles.iter().enumerate() {
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                match first_user.get(&key) {
                    Some(&other) => {
                        let (ra, rb) = (find(&mut parent, t), find(&mut parent, other));
                        if ra != rb {
                            parent[ra.max(rb)] = ra.min(rb);
                        }
                    }
                    None => {
                        first_user.insert(key, t);
                    }
                }
            }
        }
        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut slot: HashMap<usize, usize> = HashMap::new();
        for t in 0..self.triangles.len() {
            let root = find(&mut parent, t);
            let idx = *slot.entry(root).or_insert_with(|| {
                groups.push(Vec::new());
                groups.len() - 1
            });
            groups[idx].push(t);
        }
        groups
    }

    /// Sub-mesh made of the given triangles.
    pub fn submesh(&self, triangles: &[usize]) -> TriangleMesh {
        TriangleMesh {
            vertices: self.vertices.clone(),
            triangles: triangles.iter().map(|&t| self.triangles[t]).collect(),
        }
        .compacted()
    }
}
