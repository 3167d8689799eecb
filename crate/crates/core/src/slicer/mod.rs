//! Mesh to G-code: layer contours, perimeters, rectilinear infill, overhang
//! supports and Marlin-flavoured output.
//!
//! Layers are independent until emission, so contouring, perimeters and
//! infill run per layer through [`crate::par`]; supports are swept per
//! scanline. Output does not depend on the execution mode.

pub mod contour;
pub mod gcode;
pub mod geom;
mod support;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mesh::{TriangleMesh, Vec3};
use crate::par::{self, Execution};

pub use gcode::{emit_gcode, extrusion_length, parse_gcode, Command, GcodeError, ToolpathProgram};
pub use geom::{Polygon2, P2};
pub use support::{generate_supports, SUPPORT_CLEARANCE, SUPPORT_DENSITY};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SliceConfig {
    pub layer_height: f64,
    pub extrusion_width: f64,
    pub filament_diameter: f64,
    pub perimeter_count: u32,
    /// Infill fraction in [0, 1]; 1 is solid.
    pub infill_density: f64,
    pub support_enabled: bool,
    /// Overhang limit in degrees from vertical.
    pub overhang_threshold_deg: f64,
    /// mm/min.
    pub print_speed: f64,
    pub travel_speed: f64,
    pub retract_speed: f64,
    pub retract_length: f64,
    /// Travels longer than this retract first.
    pub retract_min_travel: f64,
    pub nozzle_temp: f64,
    pub bed_temp: f64,
    pub build_volume: [f64; 3],
    /// Move the part's XY centre to the bed centre before slicing.
    pub center_on_bed: bool,
}

impl Default for SliceConfig {
    fn default() -> Self {
        SliceConfig {
            layer_height: 0.2,
            extrusion_width: 0.4,
            filament_diameter: 1.75,
            perimeter_count: 2,
            infill_density: 0.2,
            support_enabled: true,
            overhang_threshold_deg: 45.0,
            print_speed: 1800.0,
            travel_speed: 7200.0,
            retract_speed: 2100.0,
            retract_length: 1.0,
            retract_min_travel: 2.0,
            nozzle_temp: 210.0,
            bed_temp: 60.0,
            build_volume: [220.0, 220.0, 250.0],
            center_on_bed: true,
        }
    }
}

impl SliceConfig {
    pub fn validate(&self) -> Result<(), SliceError> {
        let bad = |m: &str| Err(SliceError::InvalidConfig(m.to_string()));
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.layer_height) {
            return bad("layer_height must be positive");
        }
        if !positive(self.extrusion_width) || self.extrusion_width < self.layer_height {
            return bad("extrusion_width must be at least layer_height");
        }
        if !positive(self.filament_diameter) {
            return bad("filament_diameter must be positive");
        }
        if !(0.0..=1.0).contains(&self.infill_density) {
            return bad("infill_density must lie in [0, 1]");
        }
        if !(0.0..90.0).contains(&self.overhang_threshold_deg) {
            return bad("overhang_threshold_deg must lie in [0, 90)");
        }
        if ![self.print_speed, self.travel_speed, self.retract_speed].into_iter().all(positive) {
            return bad("speeds must be positive");
        }
        if !self.build_volume.into_iter().all(positive) {
            return bad("build_volume must be positive");
        }
        if !(self.retract_length >= 0.0 && self.retract_min_travel >= 0.0) {
            return bad("retraction settings must be non-negative");
        }
        Ok(())
    }

    /// Copy with the fields present in `overrides` (a JSON object using the
    /// same field names) replaced. Unknown keys are rejected.
    pub fn with_overrides(&self, overrides: &serde_json::Value) -> Result<SliceConfig, SliceError> {
        let bad = |m: String| SliceError::InvalidConfig(m);
        let mut merged = serde_json::to_value(self).map_err(|e| bad(e.to_string()))?;
        match overrides {
            serde_json::Value::Null => {}
            serde_json::Value::Object(fields) => {
                let target = merged.as_object_mut().expect("config serializes as an object");
                for (k, v) in fields {
                    if !target.contains_key(k) {
                        return Err(bad(format!("unknown setting `{k}`")));
                    }
                    target.insert(k.clone(), v.clone());
                }
            }
            _ => return Err(bad("overrides must be a JSON object".into())),
        }
        let cfg: SliceConfig = serde_json::from_value(merged).map_err(|e| bad(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Key/value pairs recorded in the G-code header.
    pub fn summary(&self) -> Vec<(&'static str, String)> {
        vec![
            ("layer_height", self.layer_height.to_string()),
            ("extrusion_width", self.extrusion_width.to_string()),
            ("filament_diameter", self.filament_diameter.to_string()),
            ("perimeter_count", self.perimeter_count.to_string()),
            ("infill_density", self.infill_density.to_string()),
            ("support_enabled", self.support_enabled.to_string()),
            ("overhang_threshold_deg", self.overhang_threshold_deg.to_string()),
            ("print_speed", self.print_speed.to_string()),
            ("travel_speed", self.travel_speed.to_string()),
            ("nozzle_temp", self.nozzle_temp.to_string()),
            ("bed_temp", self.bed_temp.to_string()),
        ]
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SliceError {
    #[error("invalid slicer config: {0}")]
    InvalidConfig(String),
    #[error("mesh is not watertight ({boundary} boundary, {non_manifold} non-manifold edges)")]
    NotWatertight { boundary: usize, non_manifold: usize },
    #[error("layer {layer} (z = {z:.3}) has an open contour with a {gap:.2e} mm gap")]
    OpenContour { layer: usize, z: f64, gap: f64 },
    #[error(transparent)]
    Gcode(#[from] GcodeError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerSlice {
    pub index: usize,
    /// Sampling height (mid-layer).
    pub z: f64,
    /// Outer boundaries counter-clockwise, holes clockwise.
    pub contours: Vec<Polygon2>,
    /// Perimeter loops, outermost ring of every contour first.
    pub perimeters: Vec<Polygon2>,
    pub infill: Vec<[P2; 2]>,
    pub support: Vec<[P2; 2]>,
    pub diagnostics: Vec<String>,
}

impl LayerSlice {
    pub fn empty(index: usize, z: f64) -> Self {
        LayerSlice {
            index,
            z,
            contours: Vec::new(),
            perimeters: Vec::new(),
            infill: Vec::new(),
            support: Vec::new(),
            diagnostics: Vec::new(),
        }
    }

    pub fn contour_area(&self) -> f64 {
        self.contours.iter().map(Polygon2::signed_area).sum()
    }

    /// Infill direction in radians: 45 degrees on even layers, 135 on odd.
    pub fn infill_angle(&self) -> f64 {
        if self.index.is_multiple_of(2) {
            std::f64::consts::FRAC_PI_4
        } else {
            3.0 * std::f64::consts::FRAC_PI_4
        }
    }
}

/// Translation that lifts the mesh to z = 0 and, if configured, centres it
/// on the bed.
pub fn bed_offset(mesh: &TriangleMesh, config: &SliceConfig) -> Vec3 {
    let Ok(b) = mesh.bounds() else {
        return Vec3::zeros();
    };
    let c = b.center();
    if config.center_on_bed {
        Vec3::new(
            config.build_volume[0] / 2.0 - c.x,
            config.build_volume[1] / 2.0 - c.y,
            -b.min.z,
        )
    } else {
        Vec3::new(0.0, 0.0, -b.min.z)
    }
}

/// Number of layers for a part of height `height`.
pub fn layer_count(height: f64, layer_height: f64) -> usize {
    (height / layer_height + 1e-9).floor().max(0.0) as usize
}

/// Contours at `z = layer_height * (k + 0.5)` for each layer `k`. The mesh
/// is placed on the bed first (see [`bed_offset`]).
pub fn slice_mesh(mesh: &TriangleMesh, config: &SliceConfig) -> Result<Vec<LayerSlice>, SliceError> {
    slice_mesh_with(Execution::default(), mesh, config)
}

pub fn slice_mesh_with(exec: Execution, mesh: &TriangleMesh, config: &SliceConfig) -> Result<Vec<LayerSlice>, SliceError> {
    config.validate()?;
    let report = mesh.watertight_report();
    if mesh.is_empty() || !report.is_watertight() {
        return Err(SliceError::NotWatertight {
            boundary: report.boundary_edges.len(),
            non_manifold: report.non_manifold_edges.len(),
        });
    }
    let placed = mesh.translated(bed_offset(mesh, config));
    slice_placed(exec, &placed, config)
}

fn slice_placed(exec: Execution, placed: &TriangleMesh, config: &SliceConfig) -> Result<Vec<LayerSlice>, SliceError> {
    let height = placed.bounds().map_or(0.0, |b| b.extent().z);
    let n = layer_count(height, config.layer_height);
    if n == 0 {
        log::warn!("part height {height:.3} mm is below one layer; nothing to slice");
    }
    par::map_range(exec, n, |k| {
        let z = config.layer_height * (k as f64 + 0.5);
        contour::slice_at(placed, z)
            .map(|contours| LayerSlice {
                contours,
                ..LayerSlice::empty(k, z)
            })
            .map_err(|g| SliceError::OpenContour { layer: k, z, gap: g.gap })
    })
    .into_iter()
    .collect()
}

/// `perimeter_count` loops per contour, the outermost at half a width from
/// the contour and the rest a full width apart.
pub fn generate_perimeters(layer: &mut LayerSlice, config: &SliceConfig) {
    let w = config.extrusion_width;
    layer.perimeters.clear();
    for (ci, contour) in layer.contours.iter().enumerate() {
        for i in 0..config.perimeter_count {
            let inset = w / 2.0 + i as f64 * w;
            match geom::offset_ring(&contour.points, inset) {
                Some(ring) => layer.perimeters.push(Polygon2::new(ring)),
                None => {
                    layer.diagnostics.push(format!(
                        "contour {ci}: {i} of {} perimeters fit",
                        config.perimeter_count
                    ));
                    break;
                }
            }
        }
    }
}

fn point_in_rings(p: &P2, rings: &[&[P2]]) -> bool {
    geom::scan_intervals(rings.iter().copied(), p.y)
        .iter()
        .any(|&(lo, hi)| p.x > lo && p.x < hi)
}

/// Region left inside the innermost perimeter.
fn infill_region(layer: &LayerSlice, config: &SliceConfig) -> Vec<Vec<P2>> {
    let w = config.extrusion_width;
    let inset = if config.perimeter_count == 0 {
        w / 2.0
    } else {
        config.perimeter_count as f64 * w
    };
    let rings: Vec<Vec<P2>> = layer
        .contours
        .iter()
        .filter_map(|c| geom::offset_ring(&c.points, inset))
        .collect();
    // A grown hole whose outer ring vanished must not become solid.
    let outers: Vec<&[P2]> = rings
        .iter()
        .filter(|r| geom::signed_area(r) > 0.0)
        .map(|r| r.as_slice())
        .collect();
    rings
        .iter()
        .filter(|r| geom::signed_area(r) > 0.0 || point_in_rings(&r[0], &outers))
        .cloned()
        .collect()
}

/// Parallel lines at spacing `extrusion_width / infill_density` clipped to
/// the infill region. Lines sit on a fixed global grid so consecutive
/// layers cross at 90 degrees.
pub fn generate_infill(layer: &mut LayerSlice, config: &SliceConfig) {
    layer.infill.clear();
    if config.infill_density <= 0.0 {
        return;
    }
    let spacing = config.extrusion_width / config.infill_density;
    let angle = layer.infill_angle();
    let region: Vec<Vec<P2>> = infill_region(layer, config)
        .iter()
        .map(|r| r.iter().map(|p| geom::rotate(p, -angle)).collect())
        .collect();
    let Some((ylo, yhi)) = region
        .iter()
        .flatten()
        .map(|p| p.y)
        .fold(None, |acc: Option<(f64, f64)>, y| Some(acc.map_or((y, y), |(lo, hi)| (lo.min(y), hi.max(y)))))
    else {
        return;
    };
    let first = (ylo / spacing - 0.5).ceil() as i64;
    let last = (yhi / spacing - 0.5).floor() as i64;
    for k in first..=last {
        let y = (k as f64 + 0.5) * spacing;
        for (x0, x1) in geom::scan_intervals(region.iter().map(|r| r.as_slice()), y) {
            layer.infill.push([
                geom::rotate(&P2::new(x0, y), angle),
                geom::rotate(&P2::new(x1, y), angle),
            ]);
        }
    }
}

#[derive(Debug, Clone)]
pub struct SliceOutput {
    pub layers: Vec<LayerSlice>,
    pub program: ToolpathProgram,
    /// Translation applied to place the part on the bed.
    pub bed_offset: Vec3,
    pub warnings: Vec<String>,
}

/// The whole pipeline: place, slice, perimeters, infill, supports, emit.
pub fn slice_to_gcode(exec: Execution, mesh: &TriangleMesh, config: &SliceConfig) -> Result<SliceOutput, SliceError> {
    let offset = bed_offset(mesh, config);
    let mut layers = slice_mesh_with(exec, mesh, config)?;
    let placed = mesh.translated(offset);
    layers = par::map_slice(exec, &layers, |layer| {
        let mut layer = layer.clone();
        generate_perimeters(&mut layer, config);
        generate_infill(&mut layer, config);
        layer
    });
    generate_supports(exec, &placed, &mut layers, config);
    let program = emit_gcode(&layers, config)?;
    let mut warnings: Vec<String> = layers
        .iter()
        .flat_map(|l| l.diagnostics.iter().map(move |d| format!("layer {}: {d}", l.index)))
        .collect();
    if layers.is_empty() {
        warnings.push("part is thinner than one layer; no layers produced".into());
    }
    Ok(SliceOutput {
        layers,
        program,
        bed_offset: offset,
        warnings,
    })
}
