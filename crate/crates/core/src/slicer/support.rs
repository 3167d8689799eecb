//! Overhang supports, sampled on scanlines.
//!
//! Each support scanline is swept top-down. Overhang faces switch their
//! footprint on once the layer lies below them; the model's own section at
//! a layer (grown by the clearance gap) cuts the column off for that layer
//! and every layer beneath it, so columns stand on the plate or on the model
//! and never pass through it.

use crate::mesh::TriangleMesh;
use crate::par::{self, Execution};

use super::geom::{intervals, offset_ring, scan_intervals, P2};
use super::{LayerSlice, SliceConfig};

pub const SUPPORT_DENSITY: f64 = 0.15;
pub const SUPPORT_CLEARANCE: f64 = 0.3;
/// Faces entirely below this height rest on the build plate.
const PLATE_EPS: f64 = 1e-6;

struct Overhang {
    min_z: f64,
    xy: [P2; 3],
}

/// Faces that need support under `threshold_deg` (measured from vertical).
/// The comparison is strict: a face exactly at the threshold prints unaided.
fn overhangs(mesh: &TriangleMesh, threshold_deg: f64) -> Vec<Overhang> {
    let limit = threshold_deg.to_radians().sin();
    let mut out: Vec<Overhang> = (0..mesh.triangle_count())
        .filter_map(|t| {
            let n = mesh.face_normal(t);
            let c = mesh.corners(t);
            let max_z = c.iter().map(|p| p.z).fold(f64::NEG_INFINITY, f64::max);
            if -n.z <= limit + 1e-9 || max_z < PLATE_EPS {
                return None;
            }
            Some(Overhang {
                min_z: c.iter().map(|p| p.z).fold(f64::INFINITY, f64::min),
                xy: c.map(|p| P2::new(p.x, p.y)),
            })
        })
        .collect();
    out.sort_by(|a, b| b.min_z.total_cmp(&a.min_z));
    out
}

fn triangle_interval(tri: &[P2; 3], y: f64) -> Option<(f64, f64)> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for i in 0..3 {
        let (a, b) = (tri[i], tri[(i + 1) % 3]);
        if (a.y <= y) != (b.y <= y) {
            let x = a.x + (y - a.y) * (b.x - a.x) / (b.y - a.y);
            lo = lo.min(x);
            hi = hi.max(x);
        }
    }
    (hi > lo).then_some((lo, hi))
}

/// Fills `layer.support` for every layer. `mesh` must be in the same frame
/// as the layers.
pub fn generate_supports(exec: Execution, mesh: &TriangleMesh, layers: &mut [LayerSlice], config: &SliceConfig) {
    for layer in layers.iter_mut() {
        layer.support.clear();
    }
    if !config.support_enabled || layers.is_empty() {
        return;
    }
    let faces = overhangs(mesh, config.overhang_threshold_deg);
    if faces.is_empty() {
        return;
    }
    let spacing = config.extrusion_width / SUPPORT_DENSITY;
    let (ylo, yhi) = faces.iter().flat_map(|f| f.xy).fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
        (lo.min(p.y), hi.max(p.y))
    });

    // Model sections grown by the clearance gap, per layer.
    let blockers: Vec<Vec<Vec<P2>>> = par::map_slice(exec, layers, |layer| {
        layer
            .contours
            .iter()
            .filter_map(|c| offset_ring(&c.points, -SUPPORT_CLEARANCE))
            .collect()
    });

    let first = (ylo / spacing - 0.5).floor() as i64;
    let last = (yhi / spacing - 0.5).ceil() as i64;
    let lines: Vec<i64> = (first..=last).collect();
    let lh = config.layer_height;
    let columns: Vec<Vec<Vec<(f64, f64)>>> = par::map_slice(exec, &lines, |&j| {
        let y = (j as f64 + 0.5) * spacing;
        let mut per_layer = vec![Vec::new(); layers.len()];
        let mut next_face = 0;
        let mut active: Vec<(f64, f64)> = Vec::new();
        for k in (0..layers.len()).rev() {
            let top = (k + 1) as f64 * lh;
            let mut fresh = Vec::new();
            while next_face < faces.len() && faces[next_face].min_z + 1e-9 >= top {
                fresh.extend(triangle_interval(&faces[next_face].xy, y));
                next_face += 1;
            }
            if !fresh.is_empty() {
                let fresh = fresh.iter().fold(Vec::new(), |acc, iv| intervals::union(&acc, &[*iv]));
                active = intervals::union(&active, &fresh);
            }
            if active.is_empty() {
                continue;
            }
            let blocked = scan_intervals(blockers[k].iter().map(|r| r.as_slice()), y);
            active = intervals::subtract(&active, &blocked);
            per_layer[k] = active
                .iter()
                .copied()
                .filter(|(lo, hi)| hi - lo >= config.extrusion_width)
                .collect();
        }
        per_layer
    });

    for (j, col) in lines.iter().zip(columns) {
        let y = (*j as f64 + 0.5) * spacing;
        for (k, ivs) in col.into_iter().enumerate() {
            layers[k]
                .support
                .extend(ivs.into_iter().map(|(lo, hi)| [P2::new(lo, y), P2::new(hi, y)]));
        }
    }
}
