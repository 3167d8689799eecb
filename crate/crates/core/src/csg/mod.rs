//! Boolean set operations on closed triangle meshes.
//!
//! Both operands are converted to BSP trees of convex polygons, clipped
//! against each other, and the surviving polygons are fan-triangulated,
//! welded and stitched at T-junctions. A single call is single-threaded and
//! deterministic; [`csg_batch`] runs independent calls side by side.

mod bsp;
mod cleanup;
mod stitch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{TriangleMesh, Vec3};
use crate::par::{self, Execution};
use crate::repair::{repair_mesh_with, RepairDiagnostics, RepairOptions};

pub use bsp::PLANE_EPSILON;

/// Inputs above this many triangles are rejected; decimate them first.
pub const MAX_INPUT_TRIANGLES: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CsgOp {
    Union,
    /// First operand minus second.
    Difference,
    Intersection,
}

impl CsgOp {
    pub fn name(self) -> &'static str {
        match self {
            CsgOp::Union => "union",
            CsgOp::Difference => "difference",
            CsgOp::Intersection => "intersection",
        }
    }
}

impl std::str::FromStr for CsgOp {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "union" => Ok(CsgOp::Union),
            "difference" | "subtract" => Ok(CsgOp::Difference),
            "intersection" | "intersect" => Ok(CsgOp::Intersection),
            other => Err(format!("unknown CSG operation `{other}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Operand {
    First,
    Second,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CsgError {
    #[error("{operand:?} operand is not watertight ({boundary} boundary, {non_manifold} non-manifold, {inconsistent} inconsistent edges)")]
    NonWatertight {
        operand: Operand,
        boundary: usize,
        non_manifold: usize,
        inconsistent: usize,
    },
    #[error("{operand:?} operand has {triangles} triangles, above the {limit} limit; simplify it first")]
    TooLarge {
        operand: Operand,
        triangles: usize,
        limit: usize,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CsgStats {
    pub input_triangles: [usize; 2],
    pub output_triangles: usize,
    pub split_polygons: usize,
    pub t_junctions_split: usize,
    pub sliver_holes_filled: usize,
    /// Edge collapses and flips that removed triangles too small to survive
    /// an STL roundtrip.
    pub small_triangle_fixes: usize,
    pub repair: RepairDiagnostics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CsgResult {
    pub mesh: TriangleMesh,
    pub stats: CsgStats,
}

fn check_operand(mesh: &TriangleMesh, operand: Operand) -> Result<(), CsgError> {
    if mesh.triangle_count() > MAX_INPUT_TRIANGLES {
        return Err(CsgError::TooLarge {
            operand,
            triangles: mesh.triangle_count(),
            limit: MAX_INPUT_TRIANGLES,
        });
    }
    let report = mesh.watertight_report();
    if mesh.is_empty() || !report.is_watertight() {
        return Err(CsgError::NonWatertight {
            operand,
            boundary: report.boundary_edges.len(),
            non_manifold: report.non_manifold_edges.len(),
            inconsistent: report.inconsistent_edges.len(),
        });
    }
    Ok(())
}

fn to_polygons(mesh: &TriangleMesh) -> Vec<bsp::Polygon> {
    (0..mesh.triangle_count())
        .filter_map(|t| {
            let [a, b, c] = mesh.corners(t);
            bsp::Polygon::triangle(a, b, c)
        })
        .collect()
}

/// Regularized Boolean operation `a op b`. Operands must be watertight,
/// outward oriented and in a common frame. An empty result is a valid
/// outcome.
pub fn csg(op: CsgOp, a: &TriangleMesh, b: &TriangleMesh) -> Result<CsgResult, CsgError> {
    check_operand(a, Operand::First)?;
    check_operand(b, Operand::Second)?;
    let mut stats = CsgStats {
        input_triangles: [a.triangle_count(), b.triangle_count()],
        ..Default::default()
    };

    let (ba, bb) = (a.bounds().expect("non-empty"), b.bounds().expect("non-empty"));
    if !ba.inflated(PLANE_EPSILON).intersects(&bb) {
        let mesh = match op {
            CsgOp::Union => a.merged(b),
            CsgOp::Difference => a.clone(),
            CsgOp::Intersection => TriangleMesh::default(),
        };
        stats.output_triangles = mesh.triangle_count();
        return Ok(CsgResult { mesh, stats });
    }

    let mut ta = bsp::BspTree::new(to_polygons(a));
    let mut tb = bsp::BspTree::new(to_polygons(b));
    match op {
        CsgOp::Union => {
            ta.clip_to(&tb);
            tb.clip_to(&ta);
            tb.invert();
            tb.clip_to(&ta);
            tb.invert();
            ta.build(tb.all_polygons());
        }
        CsgOp::Difference => {
            ta.invert();
            ta.clip_to(&tb);
            tb.clip_to(&ta);
            tb.invert();
            tb.clip_to(&ta);
            tb.invert();
            ta.build(tb.all_polygons());
            ta.invert();
        }
        CsgOp::Intersection => {
            ta.invert();
            tb.clip_to(&ta);
            tb.invert();
            ta.clip_to(&tb);
            tb.clip_to(&ta);
            ta.build(tb.all_polygons());
            ta.invert();
        }
    }
    stats.split_polygons = ta.splits + tb.splits;

    let soup: Vec<[Vec3; 3]> = ta
        .into_polygons()
        .into_iter()
        .flat_map(|p| {
            let v = p.vertices;
            (2..v.len()).map(move |i| [v[0], v[i - 1], v[i]]).collect::<Vec<_>>()
        })
        .collect();

    let (stitched, stitch_stats) = stitch::stitch(&soup);
    stats.t_junctions_split = stitch_stats.t_junctions_split;
    // Snapping to f32 can merge close vertices; close what that opens, then
    // clear out triangles the STL loader would drop.
    let mut snapped = cleanup::snap_to_f32(&stitched);
    stats.sliver_holes_filled = stitch_stats.sliver_holes_filled + stitch::fill_sliver_holes(&mut snapped);
    let cleaned = cleanup::remove_small_triangles(&mut snapped);
    stats.small_triangle_fixes = cleaned.collapsed + cleaned.flipped;
    if cleaned.remaining_small > 0 {
        log::debug!("{} triangles below the area floor remain", cleaned.remaining_small);
    }
    let stitched = snapped;
    // BSP output orientation is authoritative: inner shells of cavities are
    // meant to face inward.
    let (mesh, repair) = repair_mesh_with(
        &stitched,
        &RepairOptions {
            outward_sign_fix: false,
            min_area: 0.0,
        },
    );
    stats.repair = repair;
    stats.output_triangles = mesh.triangle_count();
    if !mesh.is_empty() && !mesh.is_watertight() {
        log::warn!(
            "{} result is not watertight: {:?}",
            op.name(),
            mesh.watertight_report()
        );
    }
    Ok(CsgResult { mesh, stats })
}

/// `part` minus `obstacle`; the obstacle is typically environment geometry
/// the part should wrap around.
pub fn subtract_fixture(part: &TriangleMesh, obstacle: &TriangleMesh) -> Result<CsgResult, CsgError> {
    csg(CsgOp::Difference, part, obstacle)
}

/// Runs independent CSG calls, in parallel when `exec` allows. Results are
/// in input order and identical to calling [`csg`] one by one.
pub fn csg_batch(
    exec: Execution,
    jobs: &[(CsgOp, &TriangleMesh, &TriangleMesh)],
) -> Vec<Result<CsgResult, CsgError>> {
    par::map_slice(exec, jobs, |(op, a, b)| csg(*op, a, b))
}
