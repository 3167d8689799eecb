//! Planar polygon helpers: signed area, scanline intervals and mitered
//! offsetting.

use nalgebra::Vector2;

pub type P2 = Vector2<f64>;

/// A closed ring. The closing edge from the last point back to the first is
/// implicit; [`Polygon2::closed_points`] yields the explicit form.
#[derive(Debug, Clone, PartialEq)]
pub struct Polygon2 {
    pub points: Vec<P2>,
}

impl Polygon2 {
    pub fn new(points: Vec<P2>) -> Self {
        Polygon2 { points }
    }

    /// Shoelace area; positive for counter-clockwise rings.
    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn is_ccw(&self) -> bool {
        self.signed_area() > 0.0
    }

    pub fn perimeter(&self) -> f64 {
        edges(&self.points).map(|(a, b)| (b - a).norm()).sum()
    }

    /// Points with the first repeated at the end.
    pub fn closed_points(&self) -> Vec<P2> {
        let mut out = self.points.clone();
        if let Some(&first) = self.points.first() {
            out.push(first);
        }
        out
    }

    pub fn bounds(&self) -> Option<(P2, P2)> {
        let first = *self.points.first()?;
        Some(self.points.iter().fold((first, first), |(lo, hi), p| (lo.inf(p), hi.sup(p))))
    }
}

pub fn signed_area(points: &[P2]) -> f64 {
    0.5 * edges(points).map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>()
}

pub fn edges(points: &[P2]) -> impl Iterator<Item = (P2, P2)> + '_ {
    let n = points.len();
    (0..n).map(move |i| (points[i], points[(i + 1) % n]))
}

pub fn cross(a: &P2, b: &P2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Left-hand unit normal of direction `d`.
fn left(d: &P2) -> P2 {
    P2::new(-d.y, d.x)
}

pub fn rotate(p: &P2, angle: f64) -> P2 {
    let (s, c) = angle.sin_cos();
    P2::new(c * p.x - s * p.y, s * p.x + c * p.y)
}

/// Even-odd intersection of the horizontal line `y` with a set of rings:
/// sorted, disjoint `(x0, x1)` intervals.
pub fn scan_intervals<'a>(rings: impl IntoIterator<Item = &'a [P2]>, y: f64) -> Vec<(f64, f64)> {
    let mut xs = Vec::new();
    for ring in rings {
        for (a, b) in edges(ring) {
            if (a.y <= y) != (b.y <= y) {
                xs.push(a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y));
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.chunks_exact(2)
        .filter(|c| c[1] > c[0])
        .map(|c| (c[0], c[1]))
        .collect()
}

/// Vertex tolerance applied before offsetting (mm), far below any nozzle.
pub const OFFSET_SIMPLIFY: f64 = 1e-3;

/// Removes repeated and collinear vertices.
pub fn simplify_ring(points: &[P2], eps: f64) -> Vec<P2> {
    let mut ring: Vec<P2> = Vec::with_capacity(points.len());
    for &p in points {
        if ring.last().is_none_or(|q: &P2| (p - q).norm() > eps) {
            ring.push(p);
        }
    }
    while ring.len() > 1 && (ring[0] - ring[ring.len() - 1]).norm() <= eps {
        ring.pop();
    }
    loop {
        let n = ring.len();
        if n < 3 {
            return ring;
        }
        let mut removed = false;
        for i in 0..n {
            let (a, b, c) = (ring[(i + n - 1) % n], ring[i], ring[(i + 1) % n]);
            let (u, v) = (b - a, c - b);
            if cross(&u, &v).abs() <= eps * (u.norm() + v.norm()) {
                ring.remove(i);
                removed = true;
                break;
            }
        }
        if !removed {
            return ring;
        }
    }
}

/// Offsets a ring by `distance` to the left of its direction of travel
/// (inward for CCW outers, into the material for CW holes; negative values
/// go the other way). Each vertex moves to the miter point of its two
/// displaced edges; edges that come out reversed are pruned and their
/// neighbours re-mitered. Returns `None` when the ring vanishes.
///
/// Exact for convex rings. Deeply concave rings can still self-intersect.
pub fn offset_ring(points: &[P2], distance: f64) -> Option<Vec<P2>> {
    // Micro-edges from boolean output have arbitrary directions and would
    // miter into long spikes.
    let ring = simplify_ring(points, OFFSET_SIMPLIFY);
    if ring.len() < 3 {
        return None;
    }
    let area0 = signed_area(&ring);
    let mut lines: Vec<(P2, P2)> = edges(&ring)
        .map(|(a, b)| {
            let d = (b - a).normalize();
            (a + left(&d) * distance, d)
        })
        .collect();

    loop {
        let m = lines.len();
        if m < 3 {
            return None;
        }
        let mut verts = Vec::with_capacity(m);
        for i in 0..m {
            let (o1, d1) = lines[(i + m - 1) % m];
            let (o2, d2) = lines[i];
            let den = cross(&d1, &d2);
            if den.abs() < 1e-12 {
                if d1.dot(&d2) < 0.0 {
                    // Antiparallel neighbours: the strip between them is
                    // thinner than the offset.
                    return None;
                }
                verts.push(o2 + d2 * (o1 - o2).dot(&d2));
            } else {
                let t = cross(&(o2 - o1), &d2) / den;
                verts.push(o1 + d1 * t);
            }
        }
        let worst = (0..m)
            .map(|i| (i, (verts[(i + 1) % m] - verts[i]).dot(&lines[i].1)))
            .filter(|&(_, dot)| dot <= 1e-12)
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match worst {
            Some((i, _)) => {
                lines.remove(i);
            }
            None => {
                let area = signed_area(&verts);
                let shrinking = distance * area0 > 0.0;
                let sane = area * area0 > 0.0
                    && area.abs() > 1e-12
                    && (!shrinking || area.abs() < area0.abs());
                return sane.then_some(verts);
            }
        }
    }
}

/// Interval set algebra on sorted, disjoint `(x0, x1)` lists.
pub mod intervals {
    pub fn union(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut all: Vec<(f64, f64)> = a.iter().chain(b).copied().collect();
        all.sort_by(|p, q| p.0.total_cmp(&q.0));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(all.len());
        for (lo, hi) in all {
            match out.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => out.push((lo, hi)),
            }
        }
        out
    }

    pub fn subtract(a: &[(f64, f64)], b: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &(lo, hi) in a {
            let mut cur = lo;
            for &(blo, bhi) in b {
                if bhi <= cur || blo >= hi {
                    continue;
                }
                if blo > cur {
                    out.push((cur, blo));
                }
                cur = cur.max(bhi);
                if cur >= hi {
                    break;
                }
            }
            if cur < hi {
                out.push((cur, hi));
            }
        }
        out
    }

    pub fn total(a: &[(f64, f64)]) -> f64 {
        a.iter().map(|(lo, hi)| hi - lo).sum()
    }
}
