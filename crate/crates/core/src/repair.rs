//! Vertex welding, degenerate removal and orientation repair.

use std::collections::{HashMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::mesh::{TriangleMesh, Vec3, DEGENERATE_AREA};

/// Vertices closer than this (mm) are merged.
pub const WELD_TOLERANCE: f64 = 1e-6;

/// What [`repair_mesh`] changed or could not fix.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RepairDiagnostics {
    pub welded_vertices: usize,
    pub unused_vertices_removed: usize,
    pub degenerate_triangles_removed: usize,
    pub flipped_triangles: usize,
    pub flipped_components: usize,
    pub boundary_edges: usize,
    pub non_manifold_edges: usize,
    /// Triangles whose winding could not be made consistent with their
    /// neighbours (non-orientable surfaces).
    pub orientation_conflicts: usize,
}

impl RepairDiagnostics {
    pub fn is_clean(&self) -> bool {
        *self == RepairDiagnostics::default()
    }
}

/// Greedy spatial-hash welder. A point is merged into the first previously
/// inserted representative within the tolerance.
pub struct Welder {
    tol: f64,
    grid: HashMap<[i64; 3], Vec<u32>>,
    positions: Vec<Vec3>,
}

impl Welder {
    pub fn new(tol: f64) -> Self {
        Welder {
            tol,
            grid: HashMap::new(),
            positions: Vec::new(),
        }
    }

    pub fn with_capacity(tol: f64, n: usize) -> Self {
        Welder {
            tol,
            grid: HashMap::with_capacity(n),
            positions: Vec::with_capacity(n),
        }
    }

    fn cell(&self, p: &Vec3) -> [i64; 3] {
        [
            (p.x / self.tol).floor() as i64,
            (p.y / self.tol).floor() as i64,
            (p.z / self.tol).floor() as i64,
        ]
    }

    /// Returns the index of the representative for `p`.
    pub fn insert(&mut self, p: Vec3) -> u32 {
        let c = self.cell(&p);
        let tol2 = self.tol * self.tol;
        let mut best: Option<u32> = None;
        for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(ids) = self.grid.get(&[c[0] + dx, c[1] + dy, c[2] + dz]) {
                        for &id in ids {
                            if (self.positions[id as usize] - p).norm_squared() <= tol2
                                && best.is_none_or(|b| id < b)
                            {
                                best = Some(id);
                            }
                        }
                    }
                }
            }
        }
        if let Some(id) = best {
            return id;
        }
        let id = self.positions.len() as u32;
        self.positions.push(p);
        self.grid.entry(c).or_default().push(id);
        id
    }

    pub fn into_positions(self) -> Vec<Vec3> {
        self.positions
    }
}

/// Builds an indexed mesh from a triangle soup, welding corners and dropping
/// triangles that collapse or fall below the degenerate-area threshold.
/// Returns the mesh and the number of dropped triangles.
pub fn weld_soup(soup: &[[Vec3; 3]], tol: f64) -> (TriangleMesh, usize) {
    weld_soup_min_area(soup, tol, DEGENERATE_AREA)
}

/// [`weld_soup`] with an explicit area floor; 0 keeps every triangle whose
/// corners stay distinct.
pub fn weld_soup_min_area(soup: &[[Vec3; 3]], tol: f64, min_area: f64) -> (TriangleMesh, usize) {
    let mut welder = Welder::with_capacity(tol, soup.len() / 2 + 8);
    let mut triangles = Vec::with_capacity(soup.len());
    let mut dropped = 0;
    for corners in soup {
        let idx = corners.map(|p| welder.insert(p));
        let area = 0.5 * (corners[1] - corners[0]).cross(&(corners[2] - corners[0])).norm();
        if idx[0] == idx[1] || idx[1] == idx[2] || idx[0] == idx[2] || area < min_area {
            dropped += 1;
            continue;
        }
        triangles.push(idx);
    }
    let mesh = TriangleMesh {
        vertices: welder.into_positions(),
        triangles,
    };
    (mesh.compacted(), dropped)
}

/// Knobs for [`repair_mesh_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RepairOptions {
    /// Flip components whose signed volume is negative. Disable when
    /// inward-facing shells are intentional (cavities produced by CSG).
    pub outward_sign_fix: bool,
    /// Triangles below this area are removed. CSG output passes 0 because
    /// its slivers are already resolved and dropping them opens holes.
    pub min_area: f64,
}

impl Default for RepairOptions {
    fn default() -> Self {
        RepairOptions {
            outward_sign_fix: true,
            min_area: DEGENERATE_AREA,
        }
    }
}

/// Welds vertices, removes degenerate triangles and makes every connected
/// component consistently and outwardly oriented.
pub fn repair_mesh(mesh: &TriangleMesh) -> (TriangleMesh, RepairDiagnostics) {
    repair_mesh_with(mesh, &RepairOptions::default())
}

pub fn repair_mesh_with(mesh: &TriangleMesh, options: &RepairOptions) -> (TriangleMesh, RepairDiagnostics) {
    let mut diag = RepairDiagnostics::default();

    // Weld in vertex order so representatives keep their relative order.
    let mut welder = Welder::with_capacity(WELD_TOLERANCE, mesh.vertices.len());
    let remap: Vec<u32> = mesh.vertices.iter().map(|&p| welder.insert(p)).collect();
    let welded = welder.into_positions();
    diag.welded_vertices = mesh.vertices.len() - welded.len();

    let mut triangles = Vec::with_capacity(mesh.triangles.len());
    for tri in &mesh.triangles {
        let t = tri.map(|i| remap[i as usize]);
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            diag.degenerate_triangles_removed += 1;
            continue;
        }
        let [a, b, c] = t.map(|i| welded[i as usize]);
        if 0.5 * (b - a).cross(&(c - a)).norm() < options.min_area {
            diag.degenerate_triangles_removed += 1;
            continue;
        }
        triangles.push(t);
    }

    // Drop unused vertices but keep the surviving order.
    let mut used = vec![false; welded.len()];
    for t in &triangles {
        for &i in t {
            used[i as usize] = true;
        }
    }
    let mut compact = vec![u32::MAX; welded.len()];
    let mut vertices = Vec::with_capacity(welded.len());
    for (i, p) in welded.iter().enumerate() {
        if used[i] {
            compact[i] = vertices.len() as u32;
            vertices.push(*p);
        }
    }
    diag.unused_vertices_removed = welded.len() - vertices.len();
    for t in &mut triangles {
        *t = t.map(|i| compact[i as usize]);
    }

    let mut out = TriangleMesh {
        vertices,
        triangles,
    };
    orient(&mut out, options, &mut diag);
    (out, diag)
}

fn orient(mesh: &mut TriangleMesh, options: &RepairOptions, diag: &mut RepairDiagnostics) {
    let n = mesh.triangles.len();
    let mut edge_users: HashMap<(u32, u32), Vec<usize>> = HashMap::with_capacity(n * 2);
    for (t, tri) in mesh.triangles.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (tri[k], tri[(k + 1) % 3]);
            edge_users.entry((a.min(b), a.max(b))).or_default().push(t);
        }
    }
    for users in edge_users.values() {
        match users.len() {
            1 => diag.boundary_edges += 1,
            2 => {}
            _ => diag.non_manifold_edges += 1,
        }
    }

    let has_directed = |tri: &[u32; 3], a: u32, b: u32| {
        (0..3).any(|k| tri[k] == a && tri[(k + 1) % 3] == b)
    };

    let mut visited = vec![false; n];
    let mut flip = vec![false; n];
    let mut queue = VecDeque::new();
    for seed in 0..n {
        if visited[seed] {
            continue;
        }
        visited[seed] = true;
        queue.push_back(seed);
        let mut component = vec![seed];
        while let Some(t) = queue.pop_front() {
            let tri = oriented(mesh.triangles[t], flip[t]);
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                let users = &edge_users[&(a.min(b), a.max(b))];
                if users.len() != 2 {
                    continue;
                }
                let other = if users[0] == t { users[1] } else { users[0] };
                // A consistent neighbour traverses the shared edge as b -> a.
                let needs_flip = has_directed(&mesh.triangles[other], a, b);
                if visited[other] {
                    if has_directed(&oriented(mesh.triangles[other], flip[other]), a, b) {
                        diag.orientation_conflicts += 1;
                    }
                    continue;
                }
                visited[other] = true;
                flip[other] = needs_flip;
                component.push(other);
                queue.push_back(other);
            }
        }

        let volume: f64 = component
            .iter()
            .map(|&t| {
                let [a, b, c] = oriented(mesh.triangles[t], flip[t]).map(|i| mesh.vertices[i as usize]);
                a.dot(&b.cross(&c))
            })
            .sum();
        if options.outward_sign_fix && volume < 0.0 {
            diag.flipped_components += 1;
            for &t in &component {
                flip[t] = !flip[t];
            }
        }
    }
    // Conflicts are seen from both sides of the offending edge.
    diag.orientation_conflicts /= 2;

    for (t, f) in flip.iter().enumerate() {
        if *f {
            diag.flipped_triangles += 1;
            let [a, b, c] = mesh.triangles[t];
            mesh.triangles[t] = [a, c, b];
        }
    }
}

fn oriented(tri: [u32; 3], flipped: bool) -> [u32; 3] {
    if flipped {
        [tri[0], tri[2], tri[1]]
    } else {
        tri
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_shapes::*;

    fn cube2() -> TriangleMesh {
        box_mesh(Vec3::repeat(-1.0), Vec3::repeat(1.0))
    }

    #[test]
    fn flipped_triangle_is_restored() {
        let mut cube = cube2();
        let [a, b, c] = cube.triangles[5];
        cube.triangles[5] = [a, c, b];
        let (fixed, diag) = repair_mesh(&cube);
        assert!(fixed.is_watertight());
        assert_eq!(fixed.triangle_count(), 12);
        assert!((fixed.signed_volume() - 8.0).abs() < 1e-12);
        assert_eq!(diag.flipped_triangles, 1);
    }

    #[test]
    fn inside_out_mesh_is_flipped_globally() {
        let (fixed, diag) = repair_mesh(&cube2().flipped());
        assert!((fixed.signed_volume() - 8.0).abs() < 1e-12);
        assert_eq!(diag.flipped_components, 1);
        assert_eq!(diag.flipped_triangles, 12);
    }

    #[test]
    fn consistent_mesh_is_untouched() {
        let cube = cube2();
        let (fixed, diag) = repair_mesh(&cube);
        assert_eq!(fixed, cube);
        assert!(diag.is_clean(), "{diag:?}");
    }

    #[test]
    fn duplicated_vertex_is_welded() {
        let mut cube = cube2();
        // Split vertex 6 into a coincident copy used by one triangle.
        cube.vertices.push(cube.vertices[6]);
        let last = cube.vertices.len() as u32 - 1;
        for idx in cube.triangles[2].iter_mut() {
            if *idx == 6 {
                *idx = last;
            }
        }
        assert_eq!(cube.vertex_count(), 9);
        let (fixed, diag) = repair_mesh(&cube);
        assert_eq!(fixed.vertex_count(), 8);
        assert_eq!(diag.welded_vertices, 1);
        assert!(fixed.is_watertight());
    }

    #[test]
    fn near_coincident_vertices_within_tolerance_merge() {
        let mut w = Welder::new(WELD_TOLERANCE);
        let a = w.insert(Vec3::new(1.0, 2.0, 3.0));
        let b = w.insert(Vec3::new(1.0 + 5e-7, 2.0, 3.0));
        let c = w.insert(Vec3::new(1.0 + 2e-6, 2.0, 3.0));
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn degenerate_triangle_is_dropped() {
        let mut cube = cube2();
        cube.vertices.push(Vec3::new(5.0, 5.0, 5.0));
        cube.vertices.push(Vec3::new(6.0, 6.0, 6.0));
        cube.vertices.push(Vec3::new(7.0, 7.0, 7.0));
        cube.triangles.push([8, 9, 10]);
        let (fixed, diag) = repair_mesh(&cube);
        assert_eq!(fixed.triangle_count(), 12);
        assert_eq!(diag.degenerate_triangles_removed, 1);
        assert_eq!(diag.unused_vertices_removed, 3);
    }

    #[test]
    fn open_mesh_reports_boundary() {
        let mut cube = cube2();
        cube.triangles.pop();
        let (_, diag) = repair_mesh(&cube);
        assert_eq!(diag.boundary_edges, 3);
    }

    #[test]
    fn repair_is_idempotent_on_damaged_input() {
        let mut cube = cube2().merged(&cube2().translated(Vec3::new(5.0, 0.0, 0.0)).flipped());
        let [a, b, c] = cube.triangles[3];
        cube.triangles[3] = [a, c, b];
        let (once, _) = repair_mesh(&cube);
        let (twice, diag) = repair_mesh(&once);
        assert_eq!(once, twice);
        assert!(diag.is_clean());
        assert!((once.signed_volume() - 16.0).abs() < 1e-12);
    }

    #[test]
    fn soup_welding_builds_shared_topology() {
        let cube = cube2();
        let soup: Vec<[Vec3; 3]> = (0..cube.triangle_count()).map(|t| cube.corners(t)).collect();
        let (mesh, dropped) = weld_soup(&soup, WELD_TOLERANCE);
        assert_eq!(dropped, 0);
        assert_eq!(mesh.vertex_count(), 8);
        assert!(mesh.is_watertight());
    }
}
