//! Makes CSG output survive a binary STL roundtrip unchanged: positions are
//! snapped to `f32`, and triangles the loader would discard as degenerate are
//! removed topologically (edge collapse or edge flip) instead of leaving
//! holes behind.

use std::collections::HashMap;

use crate::mesh::{TriangleMesh, Vec3, DEGENERATE_AREA};
use crate::repair::{Welder, WELD_TOLERANCE};

/// Target floor for triangle area, with headroom over the loader's threshold.
pub const MIN_AREA: f64 = 4.0 * DEGENERATE_AREA;
/// Edges shorter than this are collapsed rather than flipped (mm).
const COLLAPSE_LENGTH: f64 = 1e-3;
const MAX_PASSES: usize = 32;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CleanupStats {
    pub collapsed: usize,
    pub flipped: usize,
    pub remaining_small: usize,
}

/// Snaps positions to `f32` and welds them the way the STL loader will.
/// Triangles whose corners merge are dropped.
pub fn snap_to_f32(mesh: &TriangleMesh) -> TriangleMesh {
    let mut welder = Welder::with_capacity(WELD_TOLERANCE, mesh.vertices.len());
    let remap: Vec<u32> = mesh
        .vertices
        .iter()
        .map(|p| welder.insert(p.map(|c| c as f32 as f64)))
        .collect();
    let triangles = mesh
        .triangles
        .iter()
        .map(|t| t.map(|i| remap[i as usize]))
        .filter(|t| t[0] != t[1] && t[1] != t[2] && t[0] != t[2])
        .collect();
    TriangleMesh {
        vertices: welder.into_positions(),
        triangles,
    }
    .compacted()
}

fn area(v: &[Vec3], t: &[u32; 3]) -> f64 {
    0.5 * cross(v, t).norm()
}

fn cross(v: &[Vec3], t: &[u32; 3]) -> Vec3 {
    let [a, b, c] = t.map(|i| v[i as usize]);
    (b - a).cross(&(c - a))
}

fn key(a: u32, b: u32) -> (u32, u32) {
    (a.min(b), a.max(b))
}

/// Removes triangles below [`MIN_AREA`] without opening the surface.
/// Only existing vertices are used, so positions stay `f32`-exact.
pub fn remove_small_triangles(mesh: &mut TriangleMesh) -> CleanupStats {
    let mut stats = CleanupStats::default();
    for _ in 0..MAX_PASSES {
        let v = &mesh.vertices;
        let mut bad: Vec<usize> = (0..mesh.triangles.len())
            .filter(|&t| area(v, &mesh.triangles[t]) < MIN_AREA)
            .collect();
        if bad.is_empty() {
            break;
        }
        bad.sort_by(|&x, &y| area(v, &mesh.triangles[x]).total_cmp(&area(v, &mesh.triangles[y])).then(x.cmp(&y)));

        let mut edges: HashMap<(u32, u32), Vec<usize>> = HashMap::with_capacity(mesh.triangles.len() * 2);
        let mut around: Vec<Vec<usize>> = vec![Vec::new(); v.len()];
        for (t, tri) in mesh.triangles.iter().enumerate() {
            for k in 0..3 {
                edges.entry(key(tri[k], tri[(k + 1) % 3])).or_default().push(t);
                around[tri[k] as usize].push(t);
            }
        }
        let mut touched = vec![false; mesh.triangles.len()];
        let mut removed = vec![false; mesh.triangles.len()];
        let mut changed = 0;
        for t in bad {
            if touched[t] {
                continue;
            }
            let tri = mesh.triangles[t];
            let vs = &mesh.vertices;
            let len: [f64; 3] = std::array::from_fn(|k| (vs[tri[(k + 1) % 3] as usize] - vs[tri[k] as usize]).norm());
            let mut order = [0usize, 1, 2];
            order.sort_by(|&x, &y| len[x].total_cmp(&len[y]));
            let mut ok = false;
            for &k in order.iter().filter(|&&k| len[k] < COLLAPSE_LENGTH) {
                let (u, w) = (tri[k], tri[(k + 1) % 3]);
                if collapse(mesh, &edges, &around, &mut touched, &mut removed, u, w)
                    || collapse(mesh, &edges, &around, &mut touched, &mut removed, w, u)
                {
                    stats.collapsed += 1;
                    ok = true;
                    break;
                }
            }
            if !ok && flip(mesh, &edges, &mut touched, t, order[2]) {
                stats.flipped += 1;
                ok = true;
            }
            if ok {
                changed += 1;
            }
        }
        let mut t = 0;
        mesh.triangles.retain(|_| {
            t += 1;
            !removed[t - 1]
        });
        if changed == 0 {
            break;
        }
    }
    let v = &mesh.vertices;
    stats.remaining_small = mesh.triangles.iter().filter(|t| area(v, t) < MIN_AREA).count();
    *mesh = mesh.compacted();
    stats
}

/// Merges `w` into `u`. Refuses when the merge would pinch the surface or
/// fold a neighbouring triangle over.
fn collapse(
    mesh: &mut TriangleMesh,
    edges: &HashMap<(u32, u32), Vec<usize>>,
    around: &[Vec<usize>],
    touched: &mut [bool],
    removed: &mut [bool],
    u: u32,
    w: u32,
) -> bool {
    let Some(shared) = edges.get(&key(u, w)) else { return false };
    if shared.len() != 2 {
        return false;
    }
    let (tu, tw) = (&around[u as usize], &around[w as usize]);
    if tu.iter().chain(tw).any(|&t| touched[t]) {
        return false;
    }
    let ring = |ts: &[usize], skip: u32| -> Vec<u32> {
        let mut r: Vec<u32> = ts
            .iter()
            .flat_map(|&t| mesh.triangles[t])
            .filter(|&x| x != skip)
            .collect();
        r.sort_unstable();
        r.dedup();
        r
    };
    let (ru, rw) = (ring(tu, u), ring(tw, w));
    let common = ru.iter().filter(|x| rw.binary_search(x).is_ok() && **x != u && **x != w).count();
    if common != 2 {
        return false;
    }
    let v = &mesh.vertices;
    for &t in tw {
        if shared.contains(&t) {
            continue;
        }
        let before = mesh.triangles[t];
        let after = before.map(|x| if x == w { u } else { x });
        let (nb, na) = (cross(v, &before), cross(v, &after));
        if nb.norm() >= 2.0 * MIN_AREA && nb.dot(&na) <= 0.0 {
            return false;
        }
    }
    for &t in shared {
        removed[t] = true;
    }
    for &t in tu.iter().chain(tw) {
        touched[t] = true;
        for x in &mut mesh.triangles[t] {
            if *x == w {
                *x = u;
            }
        }
    }
    true
}

/// Flips edge `k` of triangle `t` (its longest edge) with the neighbour
/// across it.
fn flip(
    mesh: &mut TriangleMesh,
    edges: &HashMap<(u32, u32), Vec<usize>>,
    touched: &mut [bool],
    t: usize,
    k: usize,
) -> bool {
    let tri = mesh.triangles[t];
    let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
    let Some(shared) = edges.get(&key(a, b)) else { return false };
    if shared.len() != 2 {
        return false;
    }
    let s = if shared[0] == t { shared[1] } else { shared[0] };
    if touched[s] {
        return false;
    }
    let other = mesh.triangles[s];
    let Some(d) = other.iter().copied().find(|&x| x != a && x != b) else { return false };
    if d == c || edges.contains_key(&key(c, d)) {
        return false;
    }
    let v = &mesh.vertices;
    let n = cross(v, &other);
    let (n1, n2) = (cross(v, &[a, d, c]), cross(v, &[d, b, c]));
    if n.dot(&n1) <= 0.0 || n.dot(&n2) <= 0.0 {
        return false;
    }
    mesh.triangles[t] = [a, d, c];
    mesh.triangles[s] = [d, b, c];
    touched[t] = true;
    touched[s] = true;
    true
}
