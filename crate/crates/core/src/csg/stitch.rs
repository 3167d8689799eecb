//! Turns the polygon soup coming out of the BSP stage back into a closed
//! indexed mesh: weld, drop slivers, and split triangles at T-junctions.

use std::collections::{BTreeMap, HashSet};

use crate::mesh::{TriangleMesh, Vec3};
use crate::repair::weld_soup_min_area;

use super::bsp::PLANE_EPSILON;

const MAX_PASSES: usize = 64;
/// Inserted points must be at least this far from both edge endpoints.
const ENDPOINT_CLEARANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StitchStats {
    pub t_junctions_split: usize,
    pub slivers_removed: usize,
    pub sliver_holes_filled: usize,
}

pub fn stitch(soup: &[[Vec3; 3]]) -> (TriangleMesh, StitchStats) {
    let (mut mesh, dropped) = weld_soup_min_area(soup, PLANE_EPSILON, 0.0);
    let mut stats = StitchStats {
        slivers_removed: dropped,
        ..Default::default()
    };
    for _ in 0..MAX_PASSES {
        let split = split_t_junctions(&mut mesh);
        let removed = drop_degenerates(&mut mesh);
        stats.t_junctions_split += split;
        stats.slivers_removed += removed;
        if split == 0 && removed == 0 {
            break;
        }
    }
    stats.sliver_holes_filled = fill_sliver_holes(&mut mesh);
    (mesh.compacted(), stats)
}

/// Holes whose area per unit of perimeter is below this are closed (mm).
const SLIVER_HOLE_WIDTH: f64 = 1e-4;

/// Closes boundary loops that are geometrically negligible. Nearly parallel
/// cutting planes can place the "same" split point on either side of an edge
/// a few plane tolerances apart; the T-junction pass cannot see those, and
/// they leave hair-thin holes.
pub(super) fn fill_sliver_holes(mesh: &mut TriangleMesh) -> usize {
    let directed: HashSet<(u32, u32)> = mesh
        .triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .collect();
    // The filling triangles use each open edge reversed.
    let mut next: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
    for &(a, b) in &directed {
        if !directed.contains(&(b, a)) {
            next.entry(b).or_default().push(a);
        }
    }
    for targets in next.values_mut() {
        targets.sort_unstable();
    }

    let mut undirected: HashSet<(u32, u32)> = directed.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
    let mut filled = 0;
    while let Some((&start, _)) = next.iter().find(|(_, v)| !v.is_empty()) {
        let mut lp = vec![start];
        let mut cur = start;
        let closed = loop {
            let Some(to) = next.get_mut(&cur).and_then(|v| v.pop()) else { break false };
            if to == start {
                break true;
            }
            if let Some(pos) = lp.iter().position(|&v| v == to) {
                // Pinched loop: keep the inner cycle and requeue the tail.
                for w in lp[..=pos].windows(2) {
                    next.entry(w[0]).or_default().push(w[1]);
                }
                lp.drain(..pos);
                break true;
            }
            lp.push(to);
            cur = to;
        };
        if !closed || lp.len() < 3 {
            continue;
        }
        let pts: Vec<Vec3> = lp.iter().map(|&v| mesh.vertices[v as usize]).collect();
        let mut area = Vec3::zeros();
        let mut perimeter = 0.0;
        for i in 0..pts.len() {
            let (p, q) = (pts[i], pts[(i + 1) % pts.len()]);
            area += (p - pts[0]).cross(&(q - pts[0]));
            perimeter += (q - p).norm();
        }
        if 0.5 * area.norm() > SLIVER_HOLE_WIDTH * perimeter {
            continue;
        }
        // Fan from a corner whose diagonals are not already mesh edges,
        // otherwise the fill would fold onto existing triangles.
        let n = lp.len();
        let Some(apex) = (0..n).find(|&k| {
            (2..n - 1).all(|i| {
                let (a, b) = (lp[k], lp[(k + i) % n]);
                !undirected.contains(&(a.min(b), a.max(b)))
            })
        }) else {
            continue;
        };
        for i in 1..n - 1 {
            let tri = [lp[apex], lp[(apex + i) % n], lp[(apex + i + 1) % n]];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                undirected.insert((a.min(b), a.max(b)));
            }
            mesh.triangles.push(tri);
        }
        filled += 1;
    }
    filled
}

/// A needle has a corner within the plane tolerance of its opposite edge.
/// Removing it is safe: the T-junction pass splits the neighbour across the
/// long edge at that corner. Small but fat triangles are kept, dropping them
/// would open a hole.
fn is_needle(a: Vec3, b: Vec3, c: Vec3) -> bool {
    let twice_area = (b - a).cross(&(c - a)).norm();
    let longest = (b - a).norm().max((c - b).norm()).max((a - c).norm());
    longest <= 0.0 || twice_area / longest <= PLANE_EPSILON
}

fn drop_degenerates(mesh: &mut TriangleMesh) -> usize {
    let before = mesh.triangles.len();
    let vertices = &mesh.vertices;
    mesh.triangles
        .retain(|&[a, b, c]| !is_needle(vertices[a as usize], vertices[b as usize], vertices[c as usize]));
    before - mesh.triangles.len()
}

/// Interior points of segment `a..b` among `candidates` (sorted by x),
/// returned sorted by their parameter along the segment.
fn points_on_segment(
    a: u32,
    b: u32,
    vertices: &[Vec3],
    candidates: &[(f64, u32)],
) -> Vec<(f64, u32)> {
    let (pa, pb) = (vertices[a as usize], vertices[b as usize]);
    let d = pb - pa;
    let len2 = d.norm_squared();
    if len2 <= 0.0 {
        return Vec::new();
    }
    let lo = pa.inf(&pb) - Vec3::repeat(PLANE_EPSILON);
    let hi = pa.sup(&pb) + Vec3::repeat(PLANE_EPSILON);
    let start = candidates.partition_point(|&(x, _)| x < lo.x);
    let mut hits = Vec::new();
    for &(x, v) in &candidates[start..] {
        if x > hi.x {
            break;
        }
        if v == a || v == b {
            continue;
        }
        let p = vertices[v as usize];
        if p.y < lo.y || p.y > hi.y || p.z < lo.z || p.z > hi.z {
            continue;
        }
        let t = (p - pa).dot(&d) / len2;
        if !(0.0..=1.0).contains(&t) {
            continue;
        }
        let foot = pa + d * t;
        if (p - foot).norm() <= PLANE_EPSILON
            && (p - pa).norm() > ENDPOINT_CLEARANCE
            && (p - pb).norm() > ENDPOINT_CLEARANCE
        {
            hits.push((t, v));
        }
    }
    hits.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    hits.dedup_by_key(|h| h.1);
    hits
}

/// One pass: every triangle with an unmatched edge that has vertices lying on
/// it is fanned from the opposite corner through those vertices.
fn split_t_junctions(mesh: &mut TriangleMesh) -> usize {
    let directed: HashSet<(u32, u32)> = mesh
        .triangles
        .iter()
        .flat_map(|t| [(t[0], t[1]), (t[1], t[2]), (t[2], t[0])])
        .collect();
    let is_open = |a: u32, b: u32| !directed.contains(&(b, a));

    let mut endpoints: Vec<u32> = directed
        .iter()
        .filter(|&&(a, b)| is_open(a, b))
        .flat_map(|&(a, b)| [a, b])
        .collect();
    if endpoints.is_empty() {
        return 0;
    }
    endpoints.sort_unstable();
    endpoints.dedup();
    let mut candidates: Vec<(f64, u32)> = endpoints
        .iter()
        .map(|&v| (mesh.vertices[v as usize].x, v))
        .collect();
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));

    let mut split = 0;
    let mut out = Vec::with_capacity(mesh.triangles.len());
    for &tri in &mesh.triangles {
        let mut done = false;
        for k in 0..3 {
            let (a, b, c) = (tri[k], tri[(k + 1) % 3], tri[(k + 2) % 3]);
            if !is_open(a, b) {
                continue;
            }
            let hits = points_on_segment(a, b, &mesh.vertices, &candidates);
            if hits.is_empty() {
                continue;
            }
            let mut prev = a;
            for &(_, v) in &hits {
                out.push([prev, v, c]);
                prev = v;
            }
            out.push([prev, b, c]);
            split += hits.len();
            done = true;
            break;
        }
        if !done {
            out.push(tri);
        }
    }
    mesh.triangles = out;
    split
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn t_junction_is_split_closed() {
        // Two triangles forming a square, one side of the diagonal split at
        // its midpoint.
        let v = [
            Vec3::new(0.0, 0.0, 0.0),
            Vec3::new(1.0, 0.0, 0.0),
            Vec3::new(1.0, 1.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.5, 0.5, 0.0),
        ];
        let soup = vec![
            [v[0], v[1], v[4]],
            [v[4], v[1], v[2]],
            [v[0], v[2], v[3]],
        ];
        let (mesh, stats) = stitch(&soup);
        assert_eq!(stats.t_junctions_split, 1);
        assert_eq!(mesh.triangle_count(), 4);
        let report = mesh.watertight_report();
        // Only the outer square boundary remains open.
        assert_eq!(report.boundary_edges.len(), 4);
        assert!(report.inconsistent_edges.is_empty());
    }
}
