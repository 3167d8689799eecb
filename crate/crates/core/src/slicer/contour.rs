//! Triangle/plane intersection and segment chaining into closed contours.

use std::collections::HashMap;

use crate::mesh::TriangleMesh;

use super::geom::{simplify_ring, Polygon2, P2};

/// Chaining tolerance for segment endpoints that do not share a mesh edge.
pub const CHAIN_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct ChainGap {
    pub gap: f64,
}

type EdgeKey = (u32, u32);

fn key(a: u32, b: u32) -> EdgeKey {
    (a.min(b), a.max(b))
}

struct Segment {
    from: EdgeKey,
    to: EdgeKey,
    a: P2,
    b: P2,
}

/// Where the plane crosses edge `k`. Computed from the canonical edge
/// orientation so both incident triangles agree bitwise.
fn crossing(mesh: &TriangleMesh, k: EdgeKey, z: f64) -> P2 {
    let (p, q) = (mesh.vertices[k.0 as usize], mesh.vertices[k.1 as usize]);
    let t = (z - p.z) / (q.z - p.z);
    P2::new(p.x + t * (q.x - p.x), p.y + t * (q.y - p.y))
}

/// Cuts `mesh` at height `z`. Vertices exactly on the plane count as above
/// it, so every crossed triangle contributes exactly one segment. Segments
/// run with the solid on their left: outer contours come out
/// counter-clockwise and holes clockwise.
pub fn slice_at(mesh: &TriangleMesh, z: f64) -> Result<Vec<Polygon2>, ChainGap> {
    let above = |v: u32| mesh.vertices[v as usize].z >= z;
    let mut segments = Vec::new();
    for tri in &mesh.triangles {
        let flags = tri.map(above);
        if flags[0] == flags[1] && flags[1] == flags[2] {
            continue;
        }
        let mut down = None;
        let mut up = None;
        for i in 0..3 {
            let (a, b) = (tri[i], tri[(i + 1) % 3]);
            match (flags[i], flags[(i + 1) % 3]) {
                (true, false) => down = Some(key(a, b)),
                (false, true) => up = Some(key(a, b)),
                _ => {}
            }
        }
        let (from, to) = (down.unwrap(), up.unwrap());
        segments.push(Segment {
            from,
            to,
            a: crossing(mesh, from, z),
            b: crossing(mesh, to, z),
        });
    }
    chain(segments)
}

fn chain(segments: Vec<Segment>) -> Result<Vec<Polygon2>, ChainGap> {
    let mut by_start: HashMap<EdgeKey, usize> = HashMap::with_capacity(segments.len());
    for (i, s) in segments.iter().enumerate() {
        by_start.insert(s.from, i);
    }
    let mut used = vec![false; segments.len()];
    let mut contours = Vec::new();
    for start in 0..segments.len() {
        if used[start] {
            continue;
        }
        let mut ring = Vec::new();
        let mut cur = start;
        loop {
            used[cur] = true;
            ring.push(segments[cur].a);
            let end = segments[cur].to;
            let next = match by_start.get(&end) {
                Some(&n) => n,
                None => nearest_start(&segments, &used, segments[cur].b, start)?,
            };
            if next == start {
                break;
            }
            if used[next] {
                return Err(ChainGap {
                    gap: (segments[cur].b - segments[start].a).norm(),
                });
            }
            cur = next;
        }
        let ring = simplify_ring(&ring, 1e-9);
        if ring.len() >= 3 {
            contours.push(Polygon2::new(ring));
        }
    }
    Ok(contours)
}

/// Fallback when topology does not link two segments: the closest unused
/// start (or the ring start) within [`CHAIN_TOLERANCE`].
fn nearest_start(segments: &[Segment], used: &[bool], p: P2, ring_start: usize) -> Result<usize, ChainGap> {
    let mut best = (f64::INFINITY, usize::MAX);
    for (i, s) in segments.iter().enumerate() {
        if used[i] && i != ring_start {
            continue;
        }
        let d = (s.a - p).norm();
        if d < best.0 {
            best = (d, i);
        }
    }
    if best.0 <= CHAIN_TOLERANCE {
        Ok(best.1)
    } else {
        Err(ChainGap { gap: best.0 })
    }
}
