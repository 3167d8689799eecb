//! Quality-factor mesh simplification by quadric-error edge collapse.
//!
//! `quality` is the target ratio of output to input triangles. Collapses are
//! taken cheapest-first from a priority queue; boundary edges are never
//! collapsed, and a collapse is skipped if it would flip an incident face by
//! more than 90 degrees or break the edge's link condition.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use nalgebra::Matrix3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{Aabb, TriangleMesh, Vec3};
use crate::par::{self, Execution};
use crate::repair::repair_mesh;

pub const DEFAULT_QUALITY: f64 = 0.30;
pub const DEFAULT_AUTO_THRESHOLD: usize = 150_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecimationConfig {
    /// Target face ratio in (0, 1].
    pub quality: f64,
    /// Downloads with more triangles than this are simplified automatically.
    pub auto_threshold: usize,
}

impl Default for DecimationConfig {
    fn default() -> Self {
        DecimationConfig {
            quality: DEFAULT_QUALITY,
            auto_threshold: DEFAULT_AUTO_THRESHOLD,
        }
    }
}

impl DecimationConfig {
    pub fn validate(&self) -> Result<(), DecimationError> {
        check_quality(self.quality)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DecimationError {
    #[error("cannot simplify an empty mesh")]
    EmptyMesh,
    #[error("quality {0} is outside (0, 1]")]
    QualityOutOfRange(f64),
}

fn check_quality(q: f64) -> Result<(), DecimationError> {
    if q.is_finite() && q > 0.0 && q <= 1.0 {
        Ok(())
    } else {
        Err(DecimationError::QualityOutOfRange(q))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HaltReason {
    /// Quality 1: nothing to do.
    Unchanged,
    ReachedTarget,
    /// No admissible collapse was left before the target was reached.
    QueueExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecimationStats {
    pub input_triangles: usize,
    pub target_triangles: usize,
    pub output_triangles: usize,
    pub collapses: usize,
    pub rejected_collapses: usize,
    pub halt: HaltReason,
    pub max_error: f64,
}

/// Symmetric 4x4 quadric, upper triangle row-major.
#[derive(Debug, Clone, Copy, Default)]
struct Quadric([f64; 10]);

impl Quadric {
    fn from_plane(n: Vec3, d: f64, weight: f64) -> Self {
        let (a, b, c) = (n.x, n.y, n.z);
        Quadric(
            [
                a * a,
                a * b,
                a * c,
                a * d,
                b * b,
                b * c,
                b * d,
                c * c,
                c * d,
                d * d,
            ]
            .map(|x| x * weight),
        )
    }

    fn add(&self, o: &Quadric) -> Quadric {
        Quadric(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }

    fn error(&self, p: &Vec3) -> f64 {
        let q = &self.0;
        let (x, y, z) = (p.x, p.y, p.z);
        q[0] * x * x + 2.0 * q[1] * x * y + 2.0 * q[2] * x * z + 2.0 * q[3] * x + q[4] * y * y
            + 2.0 * q[5] * y * z
            + 2.0 * q[6] * y
            + q[7] * z * z
            + 2.0 * q[8] * z
            + q[9]
    }

    fn minimizer(&self) -> Option<Vec3> {
        let q = &self.0;
        let a = Matrix3::new(q[0], q[1], q[2], q[1], q[4], q[5], q[2], q[5], q[7]);
        let scale = q[0] + q[4] + q[7];
        if scale.is_nan() || scale <= 0.0 || a.determinant().abs() < 1e-9 * scale * scale * scale {
            return None;
        }
        let inv = a.try_inverse()?;
        let p = -(inv * Vec3::new(q[3], q[6], q[8]));
        p.iter().all(|c| c.is_finite()).then_some(p)
    }
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    cost: f64,
    u: u32,
    v: u32,
    stamp_u: u32,
    stamp_v: u32,
    target: Vec3,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Candidate {}
impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Candidate {
    // Reversed so BinaryHeap pops the cheapest edge first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .cost
            .total_cmp(&self.cost)
            .then(other.u.cmp(&self.u))
            .then(other.v.cmp(&self.v))
    }
}

struct Collapser {
    pos: Vec<Vec3>,
    quadrics: Vec<Quadric>,
    stamps: Vec<u32>,
    removed: Vec<bool>,
    tris: Vec<[u32; 3]>,
    tri_alive: Vec<bool>,
    vert_tris: Vec<Vec<u32>>,
    bounds: Aabb,
    alive: usize,
}

impl Collapser {
    fn new(mesh: &TriangleMesh) -> Self {
        let n = mesh.vertex_count();
        let planes = par::map_range(Execution::default(), mesh.triangle_count(), |t| {
            let cross = mesh.face_cross(t);
            let area2 = cross.norm();
            if area2 > 0.0 {
                let normal = cross / area2;
                Quadric::from_plane(normal, -normal.dot(&mesh.vertices[mesh.triangles[t][0] as usize]), 0.5 * area2)
            } else {
                Quadric::default()
            }
        });
        let mut quadrics = vec![Quadric::default(); n];
        let mut vert_tris: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for &v in tri {
                quadrics[v as usize] = quadrics[v as usize].add(&planes[t]);
                vert_tris[v as usize].push(t as u32);
            }
        }
        Collapser {
            pos: mesh.vertices.clone(),
            quadrics,
            stamps: vec![0; n],
            removed: vec![false; n],
            tris: mesh.triangles.clone(),
            tri_alive: vec![true; mesh.triangle_count()],
            vert_tris,
            bounds: mesh.bounds().expect("non-empty"),
            alive: mesh.triangle_count(),
        }
    }

    fn clamp(&self, p: Vec3) -> Vec3 {
        p.sup(&self.bounds.min).inf(&self.bounds.max)
    }

    fn candidate(&self, u: u32, v: u32) -> Candidate {
        let q = self.quadrics[u as usize].add(&self.quadrics[v as usize]);
        let (pu, pv) = (self.pos[u as usize], self.pos[v as usize]);
        let mut best = (q.error(&pu), pu);
        for p in [pv, (pu + pv) * 0.5] {
            let e = q.error(&p);
            if e < best.0 {
                best = (e, p);
            }
        }
        if let Some(opt) = q.minimizer() {
            let opt = self.clamp(opt);
            // Reject far-flung minimizers of nearly flat quadrics.
            let reach = (pu - pv).norm() * 2.0;
            if (opt - (pu + pv) * 0.5).norm() <= reach {
                let e = q.error(&opt);
                if e < best.0 {
                    best = (e, opt);
                }
            }
        }
        Candidate {
            cost: best.0.max(0.0),
            u,
            v,
            stamp_u: self.stamps[u as usize],
            stamp_v: self.stamps[v as usize],
            target: best.1,
        }
    }

    fn live_tris(&self, v: u32) -> impl Iterator<Item = u32> + '_ {
        self.vert_tris[v as usize]
            .iter()
            .copied()
            .filter(|&t| self.tri_alive[t as usize])
    }

    fn neighbors(&self, v: u32) -> Vec<u32> {
        let mut out: Vec<u32> = self
            .live_tris(v)
            .flat_map(|t| self.tris[t as usize])
            .filter(|&w| w != v)
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    fn is_stale(&self, c: &Candidate) -> bool {
        self.removed[c.u as usize]
            || self.removed[c.v as usize]
            || self.stamps[c.u as usize] != c.stamp_u
            || self.stamps[c.v as usize] != c.stamp_v
    }

    /// Checks the collapse of edge (u, v) to `target`. Returns the two shared
    /// triangles when admissible.
    fn admissible(&self, c: &Candidate) -> Option<[u32; 2]> {
        let (u, v) = (c.u, c.v);
        let shared: Vec<u32> = self
            .live_tris(u)
            .filter(|&t| self.tris[t as usize].contains(&v))
            .collect();
        // Boundary (1) and non-manifold (>2) edges are never collapsed.
        if shared.len() != 2 {
            return None;
        }
        let opposite: Vec<u32> = shared
            .iter()
            .map(|&t| {
                *self.tris[t as usize]
                    .iter()
                    .find(|&&w| w != u && w != v)
                    .unwrap()
            })
            .collect();
        if opposite[0] == opposite[1] {
            return None;
        }
        // Link condition: the only common neighbours are the two opposite
        // vertices.
        let nu = self.neighbors(u);
        let nv = self.neighbors(v);
        let common = nu.iter().filter(|w| nv.binary_search(w).is_ok()).count();
        if common != 2 {
            return None;
        }
        // The merged vertex needs at least three neighbours or two faces
        // fold onto each other (the tetrahedron case).
        if nu.len() + nv.len() < 7 {
            return None;
        }
        for w in [u, v] {
            for t in self.live_tris(w) {
                if shared.contains(&t) {
                    continue;
                }
                let tri = self.tris[t as usize];
                let old = tri.map(|i| self.pos[i as usize]);
                let new = tri.map(|i| if i == u || i == v { c.target } else { self.pos[i as usize] });
                let n_old = (old[1] - old[0]).cross(&(old[2] - old[0]));
                let n_new = (new[1] - new[0]).cross(&(new[2] - new[0]));
                if n_new.norm() < 2e-9 || n_old.dot(&n_new) < 0.0 {
                    return None;
                }
            }
        }
        Some([shared[0], shared[1]])
    }

    fn collapse(&mut self, c: &Candidate, shared: [u32; 2]) {
        let (u, v) = (c.u, c.v);
        for t in shared {
            self.tri_alive[t as usize] = false;
        }
        self.alive -= 2;
        let moved: Vec<u32> = self.live_tris(v).collect();
        for &t in &moved {
            for idx in self.tris[t as usize].iter_mut() {
                if *idx == v {
                    *idx = u;
                }
            }
        }
        let mut merged: Vec<u32> = self.live_tris(u).chain(moved).collect();
        merged.sort_unstable();
        merged.dedup();
        self.vert_tris[u as usize] = merged;
        self.vert_tris[v as usize].clear();
        self.removed[v as usize] = true;
        self.pos[u as usize] = c.target;
        self.quadrics[u as usize] = self.quadrics[u as usize].add(&self.quadrics[v as usize]);
        self.stamps[u as usize] += 1;
    }

    fn into_mesh(self) -> TriangleMesh {
        TriangleMesh {
            vertices: self.pos,
            triangles: self
                .tris
                .iter()
                .zip(&self.tri_alive)
                .filter(|(_, a)| **a)
                .map(|(t, _)| *t)
                .collect(),
        }
        .compacted()
    }
}

fn edge_list(mesh: &TriangleMesh) -> Vec<(u32, u32)> {
    let mut edges: Vec<(u32, u32)> = mesh
        .triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .map(|(a, b)| (a.min(b), a.max(b)))
        .collect();
    edges.sort_unstable();
    edges.dedup();
    edges
}

/// Reduces `mesh` to about `round(quality * triangles)` triangles.
pub fn simplify(mesh: &TriangleMesh, quality: f64) -> Result<(TriangleMesh, DecimationStats), DecimationError> {
    check_quality(quality)?;
    if mesh.is_empty() {
        return Err(DecimationError::EmptyMesh);
    }
    let input = mesh.triangle_count();
    let target = (quality * input as f64).round() as usize;
    let mut stats = DecimationStats {
        input_triangles: input,
        target_triangles: target,
        output_triangles: input,
        collapses: 0,
        rejected_collapses: 0,
        halt: HaltReason::Unchanged,
        max_error: 0.0,
    };
    if quality >= 1.0 || target >= input {
        return Ok((mesh.clone(), stats));
    }

    let mut state = Collapser::new(mesh);
    let mut heap: BinaryHeap<Candidate> = edge_list(mesh)
        .into_iter()
        .map(|(u, v)| state.candidate(u, v))
        .collect();

    stats.halt = HaltReason::QueueExhausted;
    while state.alive > target {
        let Some(c) = heap.pop() else { break };
        if state.is_stale(&c) {
            continue;
        }
        let Some(shared) = state.admissible(&c) else {
            stats.rejected_collapses += 1;
            continue;
        };
        state.collapse(&c, shared);
        stats.collapses += 1;
        stats.max_error = stats.max_error.max(c.cost);
        for w in state.neighbors(c.u) {
            heap.push(state.candidate(c.u.min(w), c.u.max(w)));
        }
    }
    if state.alive <= target {
        stats.halt = HaltReason::ReachedTarget;
    }

    let (out, _) = repair_mesh(&state.into_mesh());
    stats.output_triangles = out.triangle_count();
    Ok((out, stats))
}

/// Simplifies only meshes with strictly more than `auto_threshold`
/// triangles. Returns the stats when simplification ran.
pub fn maybe_auto_simplify(
    mesh: &TriangleMesh,
    config: &DecimationConfig,
) -> Result<(TriangleMesh, Option<DecimationStats>), DecimationError> {
    config.validate()?;
    if mesh.triangle_count() > config.auto_threshold {
        let (out, stats) = simplify(mesh, config.quality)?;
        Ok((out, Some(stats)))
    } else {
        Ok((mesh.clone(), None))
    }
}
