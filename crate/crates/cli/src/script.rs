//! Remix scripts: a flat JSON array of scene operations, replayed against a
//! repository client into a fresh scene.
//!
//! ```json
//! [
//!   {"op": "search", "query": "pendant"},
//!   {"op": "gather", "entry_id": "pendant-animal"},
//!   {"op": "import_environment", "file": "../fixtures/env/shelf.stl", "label": "shelf", "as": "shelf"},
//!   {"op": "place", "primitive": {"kind": "cylinder", "radius": 20, "height": 60, "segments": 128},
//!    "transform": {"translate": [0, 0, -9]}, "as": "mount"},
//!   {"op": "csg", "operation": "difference", "first": "mount", "second": "shelf", "as": "notched"},
//!   {"op": "export", "node": "notched", "name": "mount", "gcode": true}
//! ]
//! ```
//!
//! Nodes are referenced by numeric id or by a name bound with `"as"`.
//! Relative file paths resolve against the script's directory.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use remixd_core::csg::CsgOp;
use remixd_core::par::Execution;
use remixd_core::primitives::PrimitiveKind;
use remixd_core::repo::{JobState, RepoClient, RepoError};
use remixd_core::scene::{save_scene, NodeId, NodeSummary, PlaceSource, Scene, SceneError};
use remixd_core::slicer::{slice_to_gcode, SliceConfig, SliceError};
use remixd_core::stl::{load_stl, StlError};
use remixd_core::transform::{Transform, TransformError};
use remixd_core::{Aabb, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// How long a `gather` waits for its download to finish.
pub const GATHER_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NodeRef {
    Id(NodeId),
    Name(String),
}

impl std::fmt::Display for NodeRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            NodeRef::Id(id) => write!(f, "{id}"),
            NodeRef::Name(n) => write!(f, "`{n}`"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScaleSpec {
    Uniform(f64),
    PerAxis([f64; 3]),
}

/// Either the scene-file form `{"t", "q", "s"}` or a friendlier
/// `{"translate", "rotate_deg", "scale"}` with every field optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Pose {
    Wire(Transform),
    Friendly(FriendlyPose),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FriendlyPose {
    #[serde(default)]
    pub translate: Option<[f64; 3]>,
    /// Roll, pitch, yaw in degrees.
    #[serde(default)]
    pub rotate_deg: Option<[f64; 3]>,
    #[serde(default)]
    pub scale: Option<ScaleSpec>,
}

impl Default for Pose {
    fn default() -> Self {
        Pose::Wire(Transform::identity())
    }
}

impl Pose {
    pub fn resolve(&self) -> Result<Transform, TransformError> {
        match self {
            Pose::Wire(t) => Ok(*t),
            Pose::Friendly(FriendlyPose {
                translate,
                rotate_deg,
                scale,
            }) => {
                let [rx, ry, rz] = rotate_deg.unwrap_or([0.0; 3]);
                let s = match scale {
                    None => Vec3::repeat(1.0),
                    Some(ScaleSpec::Uniform(s)) => Vec3::repeat(*s),
                    Some(ScaleSpec::PerAxis(s)) => Vec3::from(*s),
                };
                Transform::from_euler_deg(rx, ry, rz)
                    .with_scale(s)?
                    .with_translation(Vec3::from(translate.unwrap_or([0.0; 3])))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum ScriptOp {
    Search {
        query: String,
        #[serde(default)]
        page: usize,
    },
    /// Download an entry and add it to the carousel.
    Gather { entry_id: String },
    RemoveGathered { index: usize },
    /// Exactly one of `gathered` and `primitive`.
    Place {
        #[serde(default)]
        gathered: Option<usize>,
        #[serde(default)]
        primitive: Option<PrimitiveKind>,
        #[serde(default)]
        transform: Pose,
        #[serde(default, rename = "as")]
        name: Option<String>,
    },
    SetTransform { node: NodeRef, transform: Pose },
    Duplicate {
        node: NodeRef,
        #[serde(default, rename = "as")]
        name: Option<String>,
    },
    Csg {
        operation: CsgOp,
        first: NodeRef,
        second: NodeRef,
        #[serde(default, rename = "as")]
        name: Option<String>,
    },
    Undo,
    ImportEnvironment {
        file: PathBuf,
        #[serde(default)]
        pose: Pose,
        label: String,
        #[serde(default, rename = "as")]
        name: Option<String>,
    },
    /// Writes `<name>.stl` and, with `gcode`, `<name>.gcode` using the run's
    /// slicer settings plus `slice` overrides.
    Export {
        node: NodeRef,
        name: String,
        #[serde(default)]
        gcode: bool,
        #[serde(default)]
        slice: serde_json::Value,
    },
}

impl ScriptOp {
    pub fn tag(&self) -> &'static str {
        match self {
            ScriptOp::Search { .. } => "search",
            ScriptOp::Gather { .. } => "gather",
            ScriptOp::RemoveGathered { .. } => "remove_gathered",
            ScriptOp::Place { .. } => "place",
            ScriptOp::SetTransform { .. } => "set_transform",
            ScriptOp::Duplicate { .. } => "duplicate",
            ScriptOp::Csg { .. } => "csg",
            ScriptOp::Undo => "undo",
            ScriptOp::ImportEnvironment { .. } => "import_environment",
            ScriptOp::Export { .. } => "export",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RemixScript {
    pub ops: Vec<ScriptOp>,
    /// Base for relative paths.
    pub base_dir: PathBuf,
    pub name: String,
}

impl RemixScript {
    pub fn parse(text: &str, base_dir: impl Into<PathBuf>, name: impl Into<String>) -> Result<Self, ScriptError> {
        let ops: Vec<ScriptOp> = serde_json::from_str(text).map_err(|e| ScriptError::Parse(e.to_string()))?;
        Ok(RemixScript {
            ops,
            base_dir: base_dir.into(),
            name: name.into(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ScriptError> {
        let text = std::fs::read_to_string(path).map_err(|e| ScriptError::Io(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        Self::parse(&text, base, name)
    }
}

#[derive(Debug, Error)]
pub enum ScriptError {
    #[error("cannot parse script: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("step {step} ({op}): {source}")]
    Step {
        step: usize,
        op: &'static str,
        #[source]
        source: StepError,
    },
}

#[derive(Debug, Error)]
pub enum StepError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Repo(#[from] RepoError),
    #[error(transparent)]
    Transform(#[from] TransformError),
    #[error(transparent)]
    Slice(#[from] SliceError),
    #[error(transparent)]
    Stl(#[from] StlError),
    #[error("unknown node name {0}")]
    UnknownName(String),
    #[error("download of `{entry}` ended {state:?}: {reason}")]
    Download {
        entry: String,
        state: JobState,
        reason: String,
    },
    #[error("place needs exactly one of `gathered` and `primitive`")]
    PlaceSource,
    #[error("export name `{0}` must be a plain file stem")]
    ExportName(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepReport {
    pub step: usize,
    pub op: String,
    pub millis: f64,
    /// Node created by the step, if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub node: Option<NodeId>,
    #[serde(skip_serializing_if = "Vec::is_empty", default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GcodeReport {
    pub file: String,
    pub sha256: String,
    pub layers: usize,
    pub filament_mm: f64,
    pub filament_volume_mm3: f64,
    pub warnings: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExportReport {
    pub node: NodeId,
    pub stl: String,
    pub sha256: String,
    pub bytes: usize,
    pub triangles: usize,
    pub volume: f64,
    pub watertight: bool,
    pub bounds: Option<Aabb>,
    pub gcode: Option<GcodeReport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunReport {
    pub script: String,
    pub steps: Vec<StepReport>,
    pub exports: Vec<ExportReport>,
    pub nodes: Vec<NodeSummary>,
    pub gathered: Vec<String>,
    pub undo_depth: usize,
    pub total_millis: f64,
}

pub struct Replay<'a> {
    pub client: &'a RepoClient,
    pub slice: SliceConfig,
    pub exec: Execution,
    pub out_dir: PathBuf,
}

fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

impl Replay<'_> {
    /// Runs every step, writing exports, `scene.json` and `report.json` to
    /// the output directory. Stops at the first failing step.
    pub fn run(&self, script: &RemixScript) -> Result<(Scene, RunReport), ScriptError> {
        let io = |e: std::io::Error| ScriptError::Io(format!("{}: {e}", self.out_dir.display()));
        std::fs::create_dir_all(&self.out_dir).map_err(io)?;
        let started = Instant::now();
        let mut scene = Scene::new(script.name.clone());
        let mut names: HashMap<String, NodeId> = HashMap::new();
        let mut steps = Vec::new();
        let mut exports = Vec::new();
        for (i, op) in script.ops.iter().enumerate() {
            let t0 = Instant::now();
            let mut step = StepReport {
                step: i,
                op: op.tag().to_string(),
                millis: 0.0,
                node: None,
                notes: Vec::new(),
            };
            self.step(script, &mut scene, &mut names, op, &mut step, &mut exports)
                .map_err(|source| ScriptError::Step {
                    step: i,
                    op: op.tag(),
                    source,
                })?;
            step.millis = t0.elapsed().as_secs_f64() * 1e3;
            log::info!("step {i} {} done in {:.1} ms", op.tag(), step.millis);
            steps.push(step);
        }
        std::fs::write(self.out_dir.join("scene.json"), save_scene(&scene)).map_err(io)?;
        let report = RunReport {
            script: script.name.clone(),
            steps,
            exports,
            nodes: scene.summaries(),
            gathered: scene.gathered.iter().map(|g| g.entry_id.clone()).collect(),
            undo_depth: scene.undo_stack.len(),
            total_millis: started.elapsed().as_secs_f64() * 1e3,
        };
        let json = serde_json::to_vec_pretty(&report).expect("report serializes");
        std::fs::write(self.out_dir.join("report.json"), json).map_err(io)?;
        Ok((scene, report))
    }

    fn step(
        &self,
        script: &RemixScript,
        scene: &mut Scene,
        names: &mut HashMap<String, NodeId>,
        op: &ScriptOp,
        report: &mut StepReport,
        exports: &mut Vec<ExportReport>,
    ) -> Result<(), StepError> {
        let resolve = |names: &HashMap<String, NodeId>, r: &NodeRef| match r {
            NodeRef::Id(id) => Ok(*id),
            NodeRef::Name(n) => names.get(n).copied().ok_or_else(|| StepError::UnknownName(n.clone())),
        };
        fn bind(names: &mut HashMap<String, NodeId>, name: &Option<String>, id: NodeId, report: &mut StepReport) {
            if let Some(n) = name {
                names.insert(n.clone(), id);
            }
            report.node = Some(id);
        }
        match op {
            ScriptOp::Search { query, page } => {
                let page = self.client.search(query, *page)?;
                report.notes = page.entries.iter().map(|e| e.id.clone()).collect();
            }
            ScriptOp::Gather { entry_id } => {
                let entry = self.client.entry(entry_id)?;
                let job = self.client.enqueue_download(&entry)?;
                let job = self.client.wait_for(job.id, GATHER_TIMEOUT)?;
                if job.state != JobState::Ready {
                    return Err(StepError::Download {
                        entry: entry_id.clone(),
                        state: job.state,
                        reason: job.failure.unwrap_or_else(|| "timed out".into()),
                    });
                }
                if let Some(stats) = &job.decimation {
                    report.notes.push(format!(
                        "simplified {} -> {} triangles",
                        stats.input_triangles, stats.output_triangles
                    ));
                }
                scene.gather(&job)?;
            }
            ScriptOp::RemoveGathered { index } => {
                let item = scene.remove_gathered(*index)?;
                report.notes.push(item.entry_id);
            }
            ScriptOp::Place {
                gathered,
                primitive,
                transform,
                name,
            } => {
                let source = match (gathered, primitive) {
                    (Some(i), None) => PlaceSource::Gathered(*i),
                    (None, Some(p)) => PlaceSource::Primitive(*p),
                    _ => return Err(StepError::PlaceSource),
                };
                let id = scene.place(&source, transform.resolve()?)?;
                bind(names, name, id, report);
            }
            ScriptOp::SetTransform { node, transform } => {
                scene.set_transform(resolve(names, node)?, transform.resolve()?)?;
            }
            ScriptOp::Duplicate { node, name } => {
                let id = scene.duplicate(resolve(names, node)?)?;
                bind(names, name, id, report);
            }
            ScriptOp::Csg {
                operation,
                first,
                second,
                name,
            } => {
                let id = scene.apply_csg(*operation, resolve(names, first)?, resolve(names, second)?)?;
                bind(names, name, id, report);
            }
            ScriptOp::Undo => {
                let record = scene.undo()?;
                report.notes.push(record.tag().to_string());
            }
            ScriptOp::ImportEnvironment { file, pose, label, name } => {
                let path = script.base_dir.join(file);
                let bytes = std::fs::read(&path).map_err(|e| StepError::Io(format!("{}: {e}", path.display())))?;
                let (id, warnings) = scene.import_environment(&bytes, pose.resolve()?, label)?;
                report.notes = warnings;
                bind(names, name, id, report);
            }
            ScriptOp::Export {
                node,
                name,
                gcode,
                slice,
            } => {
                if name.is_empty() || name.contains(['/', '\\']) || name.starts_with('.') {
                    return Err(StepError::ExportName(name.clone()));
                }
                let id = resolve(names, node)?;
                let bytes = scene.export_node_stl(id)?;
                let mesh = load_stl(&bytes)?.mesh;
                let stl = format!("{name}.stl");
                self.write(&stl, &bytes)?;
                let gcode = if *gcode {
                    let cfg = self.slice.with_overrides(slice)?;
                    let out = slice_to_gcode(self.exec, &mesh, &cfg)?;
                    let text = out.program.to_text();
                    let file = format!("{name}.gcode");
                    self.write(&file, text.as_bytes())?;
                    report.notes.extend(out.warnings.iter().take(5).cloned());
                    Some(GcodeReport {
                        sha256: sha256_hex(text.as_bytes()),
                        file,
                        layers: out.program.layer_count,
                        filament_mm: out.program.total_extruded_mm,
                        filament_volume_mm3: out.program.filament_volume_mm3,
                        warnings: out.warnings.len(),
                    })
                } else {
                    None
                };
                exports.push(ExportReport {
                    node: id,
                    sha256: sha256_hex(&bytes),
                    stl,
                    bytes: bytes.len(),
                    triangles: mesh.triangle_count(),
                    volume: mesh.signed_volume(),
                    watertight: mesh.is_watertight(),
                    bounds: mesh.bounds().ok(),
                    gcode,
                });
                report.node = Some(id);
            }
        }
        Ok(())
    }

    fn write(&self, file: &str, bytes: &[u8]) -> Result<(), StepError> {
        let path = self.out_dir.join(file);
        std::fs::write(&path, bytes).map_err(|e| StepError::Io(format!("{}: {e}", path.display())))
    }
}
