//! Binary space partitioning of convex polygons.
//!
//! Nodes live in an arena and every traversal is iterative: BSP trees of
//! convex solids degenerate into chains as long as the polygon count.

use crate::mesh::Vec3;

/// Points closer than this to a plane are considered on it (mm).
pub const PLANE_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub w: f64,
}

impl Plane {
    pub fn from_points(a: &Vec3, b: &Vec3, c: &Vec3) -> Option<Plane> {
        let n = (b - a).cross(&(c - a));
        let len = n.norm();
        if !len.is_finite() || len <= 0.0 {
            return None;
        }
        let normal = n / len;
        Some(Plane {
            normal,
            w: normal.dot(a),
        })
    }

    pub fn flip(&mut self) {
        self.normal = -self.normal;
        self.w = -self.w;
    }

    fn distance(&self, p: &Vec3) -> f64 {
        self.normal.dot(p) - self.w
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polygon {
    pub vertices: Vec<Vec3>,
    pub plane: Plane,
}

impl Polygon {
    pub fn triangle(a: Vec3, b: Vec3, c: Vec3) -> Option<Polygon> {
        let plane = Plane::from_points(&a, &b, &c)?;
        Some(Polygon {
            vertices: vec![a, b, c],
            plane,
        })
    }

    pub fn flip(&mut self) {
        self.vertices.reverse();
        self.plane.flip();
    }
}

const COPLANAR: u8 = 0;
const FRONT: u8 = 1;
const BACK: u8 = 2;
const SPANNING: u8 = 3;

/// Where the pieces of a split polygon go.
#[derive(Default)]
struct SplitOutput {
    coplanar_front: Vec<Polygon>,
    coplanar_back: Vec<Polygon>,
    front: Vec<Polygon>,
    back: Vec<Polygon>,
}

/// Splits `polygon` by `plane`. Coplanar polygons are assigned by the sign
/// of their normal's dot product with the plane normal (>= 0 is front).
/// Returns true if the polygon was cut into pieces.
fn split_polygon(plane: &Plane, polygon: Polygon, out: &mut SplitOutput) -> bool {
    let mut kind = COPLANAR;
    let types: Vec<u8> = polygon
        .vertices
        .iter()
        .map(|v| {
            let t = plane.distance(v);
            let ty = if t < -PLANE_EPSILON {
                BACK
            } else if t > PLANE_EPSILON {
                FRONT
            } else {
                COPLANAR
            };
            kind |= ty;
            ty
        })
        .collect();

    match kind {
        COPLANAR => {
            if plane.normal.dot(&polygon.plane.normal) >= 0.0 {
                out.coplanar_front.push(polygon);
            } else {
                out.coplanar_back.push(polygon);
            }
            false
        }
        FRONT => {
            out.front.push(polygon);
            false
        }
        BACK => {
            out.back.push(polygon);
            false
        }
        _ => {
            let n = polygon.vertices.len();
            let mut f = Vec::with_capacity(n + 1);
            let mut b = Vec::with_capacity(n + 1);
            for i in 0..n {
                let j = (i + 1) % n;
                let (ti, tj) = (types[i], types[j]);
                let (vi, vj) = (polygon.vertices[i], polygon.vertices[j]);
                if ti != BACK {
                    f.push(vi);
                }
                if ti != FRONT {
                    b.push(vi);
                }
                if ti | tj == SPANNING {
                    let t = (plane.w - plane.normal.dot(&vi)) / plane.normal.dot(&(vj - vi));
                    let v = vi + (vj - vi) * t;
                    f.push(v);
                    b.push(v);
                }
            }
            if f.len() >= 3 {
                out.front.push(Polygon {
                    vertices: f,
                    plane: polygon.plane,
                });
            }
            if b.len() >= 3 {
                out.back.push(Polygon {
                    vertices: b,
                    plane: polygon.plane,
                });
            }
            true
        }
    }
}

#[derive(Debug, Clone, Default)]
struct Node {
    plane: Option<Plane>,
    front: Option<usize>,
    back: Option<usize>,
    polygons: Vec<Polygon>,
}

#[derive(Debug, Clone)]
pub struct BspTree {
    nodes: Vec<Node>,
    /// Polygons cut into pieces so far.
    pub splits: usize,
}

impl BspTree {
    pub fn new(polygons: Vec<Polygon>) -> Self {
        let mut tree = BspTree {
            nodes: vec![Node::default()],
            splits: 0,
        };
        tree.build(polygons);
        tree
    }

    /// Converts solid space to empty space and vice versa.
    pub fn invert(&mut self) {
        for node in &mut self.nodes {
            for p in &mut node.polygons {
                p.flip();
            }
            if let Some(plane) = &mut node.plane {
                plane.flip();
            }
            std::mem::swap(&mut node.front, &mut node.back);
        }
    }

    /// Removes the parts of `polygons` that lie inside this tree's solid.
    pub fn clip_polygons(&self, polygons: Vec<Polygon>, splits: &mut usize) -> Vec<Polygon> {
        let mut kept = Vec::new();
        let mut stack = vec![(0usize, polygons)];
        while let Some((idx, polys)) = stack.pop() {
            let node = &self.nodes[idx];
            let Some(plane) = node.plane else {
                kept.extend(polys);
                continue;
            };
            let mut out = SplitOutput::default();
            for p in polys {
                if split_polygon(&plane, p, &mut out) {
                    *splits += 1;
                }
            }
            let mut front = out.coplanar_front;
            front.append(&mut out.front);
            let mut back = out.coplanar_back;
            back.append(&mut out.back);
            // Push back first so the front subtree is processed first.
            if let Some(b) = node.back {
                if !back.is_empty() {
                    stack.push((b, back));
                }
            }
            match node.front {
                Some(f) if !front.is_empty() => stack.push((f, front)),
                Some(_) => {}
                None => kept.extend(front),
            }
        }
        kept
    }

    /// Removes all polygons in this tree that are inside `other`.
    pub fn clip_to(&mut self, other: &BspTree) {
        let mut splits = 0;
        for i in 0..self.nodes.len() {
            let polys = std::mem::take(&mut self.nodes[i].polygons);
            self.nodes[i].polygons = other.clip_polygons(polys, &mut splits);
        }
        self.splits += splits;
    }

    pub fn all_polygons(&self) -> Vec<Polygon> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            let node = &self.nodes[idx];
            out.extend(node.polygons.iter().cloned());
            if let Some(b) = node.back {
                stack.push(b);
            }
            if let Some(f) = node.front {
                stack.push(f);
            }
        }
        out
    }

    pub fn into_polygons(mut self) -> Vec<Polygon> {
        let mut out = Vec::new();
        let mut stack = vec![0usize];
        while let Some(idx) = stack.pop() {
            out.append(&mut self.nodes[idx].polygons);
            if let Some(b) = self.nodes[idx].back {
                stack.push(b);
            }
            if let Some(f) = self.nodes[idx].front {
                stack.push(f);
            }
        }
        out
    }

    /// Inserts polygons, splitting them by existing node planes.
    pub fn build(&mut self, polygons: Vec<Polygon>) {
        if polygons.is_empty() {
            return;
        }
        let mut stack = vec![(0usize, polygons)];
        while let Some((idx, polys)) = stack.pop() {
            if polys.is_empty() {
                continue;
            }
            let plane = *self.nodes[idx].plane.get_or_insert(polys[0].plane);
            let mut out = SplitOutput::default();
            for p in polys {
                if split_polygon(&plane, p, &mut out) {
                    self.splits += 1;
                }
            }
            let node = &mut self.nodes[idx];
            node.polygons.append(&mut out.coplanar_front);
            node.polygons.append(&mut out.coplanar_back);
            if !out.back.is_empty() {
                let child = self.child(idx, false);
                stack.push((child, out.back));
            }
            if !out.front.is_empty() {
                let child = self.child(idx, true);
                stack.push((child, out.front));
            }
        }
    }

    fn child(&mut self, idx: usize, front: bool) -> usize {
        let existing = if front { self.nodes[idx].front } else { self.nodes[idx].back };
        if let Some(c) = existing {
            return c;
        }
        let c = self.nodes.len();
        self.nodes.push(Node::default());
        if front {
            self.nodes[idx].front = Some(c);
        } else {
            self.nodes[idx].back = Some(c);
        }
        c
    }
}
