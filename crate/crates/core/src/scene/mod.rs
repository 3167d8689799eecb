//! Remix session state: the gathered carousel, placed nodes, environment
//! scans, CSG application with undo, and the scene file.
//!
//! Every mesh held by a scene is in STL-canonical form (see
//! [`crate::stl::stl_canonical`]), so saving and loading is lossless and
//! exports are bit-for-bit reproducible.

mod file;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::csg::{csg, CsgError, CsgOp};
use crate::mesh::{Aabb, TriangleMesh};
use crate::primitives::{make_primitive, PrimitiveError, PrimitiveKind};
use crate::repair::repair_mesh;
use crate::repo::{DownloadJob, JobState};
use crate::stl::{load_stl, stl_canonical, write_stl, StlError, StlFormat};
use crate::transform::{apply_transform, Transform};

pub use file::{load_scene, save_scene, SCENE_FILE_VERSION};

pub type NodeId = u64;

/// Numeric tolerance for scene comparisons.
pub const SCENE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    /// Printable candidate.
    Model,
    /// Real-world context; never exported and never consumed by CSG.
    Environment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum NodeSource {
    Repository { entry_id: String },
    Primitive { spec: PrimitiveKind },
    Environment { label: String },
    Csg { op: CsgOp, first: NodeId, second: NodeId },
    Duplicate { of: NodeId },
}

impl NodeSource {
    /// Node ids this one was derived from.
    pub fn parents(&self) -> Vec<NodeId> {
        match self {
            NodeSource::Csg { first, second, .. } => vec![*first, *second],
            NodeSource::Duplicate { of } => vec![*of],
            _ => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneNode {
    pub id: NodeId,
    pub kind: NodeKind,
    pub source: NodeSource,
    pub transform: Transform,
    #[serde(rename = "mesh_stl_b64", with = "file::mesh_b64")]
    pub mesh: Arc<TriangleMesh>,
}

impl SceneNode {
    pub fn world_mesh(&self) -> TriangleMesh {
        apply_transform(&self.mesh, &self.transform)
    }

    fn approx_eq(&self, other: &SceneNode, tol: f64) -> bool {
        self.id == other.id
            && self.kind == other.kind
            && self.source == other.source
            && self.transform.approx_eq(&other.transform, tol)
            && meshes_approx_eq(&self.mesh, &other.mesh, tol)
    }
}

/// A downloaded model in the carousel, not yet placed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatheredItem {
    pub entry_id: String,
    pub title: String,
    #[serde(rename = "mesh_stl_b64", with = "file::mesh_b64")]
    pub mesh: Arc<TriangleMesh>,
}

impl GatheredItem {
    fn approx_eq(&self, other: &GatheredItem, tol: f64) -> bool {
        self.entry_id == other.entry_id && self.title == other.title && meshes_approx_eq(&self.mesh, &other.mesh, tol)
    }
}

fn meshes_approx_eq(a: &TriangleMesh, b: &TriangleMesh, tol: f64) -> bool {
    a.triangles == b.triangles
        && a.vertices.len() == b.vertices.len()
        && a.vertices.iter().zip(&b.vertices).all(|(p, q)| (p - q).amax() <= tol)
}

/// Enough state to reverse one mutation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum UndoRecord {
    Gather,
    RemoveGathered { index: usize, item: GatheredItem },
    Place { node: NodeId },
    SetTransform { node: NodeId, previous: Transform },
    Duplicate { node: NodeId },
    /// `consumed` holds removed model operands with their list positions,
    /// ascending.
    Csg { result: NodeId, consumed: Vec<(usize, SceneNode)> },
    ImportEnvironment { node: NodeId },
}

impl UndoRecord {
    pub fn tag(&self) -> &'static str {
        match self {
            UndoRecord::Gather => "gather",
            UndoRecord::RemoveGathered { .. } => "remove_gathered",
            UndoRecord::Place { .. } => "place",
            UndoRecord::SetTransform { .. } => "set_transform",
            UndoRecord::Duplicate { .. } => "duplicate",
            UndoRecord::Csg { .. } => "csg",
            UndoRecord::ImportEnvironment { .. } => "import_environment",
        }
    }

    fn approx_eq(&self, other: &UndoRecord, tol: f64) -> bool {
        match (self, other) {
            (UndoRecord::RemoveGathered { index: i, item: a }, UndoRecord::RemoveGathered { index: j, item: b }) => {
                i == j && a.approx_eq(b, tol)
            }
            (UndoRecord::SetTransform { node: n, previous: a }, UndoRecord::SetTransform { node: m, previous: b }) => {
                n == m && a.approx_eq(b, tol)
            }
            (UndoRecord::Csg { result: r, consumed: a }, UndoRecord::Csg { result: s, consumed: b }) => {
                r == s
                    && a.len() == b.len()
                    && a.iter().zip(b).all(|((i, x), (j, y))| i == j && x.approx_eq(y, tol))
            }
            _ => self == other,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SceneError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("gathered index {index} out of range (carousel holds {len})")]
    GatheredIndex { index: usize, len: usize },
    #[error("download job {0} is not ready")]
    JobNotReady(String),
    #[error("CSG needs two distinct nodes")]
    SameNode,
    #[error(transparent)]
    Csg(#[from] CsgError),
    #[error(transparent)]
    Primitive(#[from] PrimitiveError),
    #[error("cannot read mesh: {0}")]
    Stl(#[from] StlError),
    #[error("mesh is empty")]
    EmptyMesh,
    #[error("node {0} is environment geometry and cannot be exported")]
    NotExportable(NodeId),
    #[error("nothing to undo")]
    NothingToUndo,
    #[error("unsupported scene file version {found} (expected {expected})")]
    Version { found: u64, expected: u64 },
    #[error("corrupt scene file: {0}")]
    Corrupt(String),
}

/// Where a placed node comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlaceSource {
    Gathered(usize),
    Primitive(PrimitiveKind),
}

/// JSON-friendly view of a node without its mesh.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeSummary {
    pub id: NodeId,
    pub kind: NodeKind,
    pub source: NodeSource,
    pub transform: Transform,
    pub triangles: usize,
    /// Volume of the world-frame mesh.
    pub volume: f64,
    pub watertight: bool,
    pub bounds: Option<Aabb>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub id: String,
    pub nodes: Vec<SceneNode>,
    pub gathered: Vec<GatheredItem>,
    pub undo_stack: Vec<UndoRecord>,
    pub(crate) next_id: NodeId,
}

impl Scene {
    pub fn new(id: impl Into<String>) -> Self {
        Scene {
            id: id.into(),
            nodes: Vec::new(),
            gathered: Vec::new(),
            undo_stack: Vec::new(),
            next_id: 1,
        }
    }

    /// The id the next new node will get. Ids are never reused.
    pub fn next_id(&self) -> NodeId {
        self.next_id
    }

    fn fresh_id(&mut self) -> NodeId {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    pub fn node(&self, id: NodeId) -> Result<&SceneNode, SceneError> {
        self.nodes.iter().find(|n| n.id == id).ok_or(SceneError::UnknownNode(id))
    }

    fn position(&self, id: NodeId) -> Result<usize, SceneError> {
        self.nodes.iter().position(|n| n.id == id).ok_or(SceneError::UnknownNode(id))
    }

    pub fn summary(&self, id: NodeId) -> Result<NodeSummary, SceneError> {
        let n = self.node(id)?;
        let world = n.world_mesh();
        Ok(NodeSummary {
            id: n.id,
            kind: n.kind,
            source: n.source.clone(),
            transform: n.transform,
            triangles: world.triangle_count(),
            volume: world.signed_volume(),
            watertight: !world.is_empty() && world.is_watertight(),
            bounds: world.bounds().ok(),
        })
    }

    pub fn summaries(&self) -> Vec<NodeSummary> {
        self.nodes.iter().map(|n| self.summary(n.id).expect("listed node")).collect()
    }

    /// Deep comparison with numeric tolerance, ignoring the id counter.
    pub fn approx_eq(&self, other: &Scene, tol: f64) -> bool {
        self.id == other.id
            && self.nodes.len() == other.nodes.len()
            && self.nodes.iter().zip(&other.nodes).all(|(a, b)| a.approx_eq(b, tol))
            && self.gathered.len() == other.gathered.len()
            && self.gathered.iter().zip(&other.gathered).all(|(a, b)| a.approx_eq(b, tol))
            && self.undo_stack.len() == other.undo_stack.len()
            && self.undo_stack.iter().zip(&other.undo_stack).all(|(a, b)| a.approx_eq(b, tol))
    }

    /// Adds a ready download to the carousel.
    pub fn gather(&mut self, job: &DownloadJob) -> Result<(), SceneError> {
        let mesh = match (&job.state, &job.mesh) {
            (JobState::Ready, Some(m)) => m,
            _ => return Err(SceneError::JobNotReady(job.id.to_string())),
        };
        self.gather_mesh(&job.entry_id, &job.title, mesh)
    }

    /// Adds an already preprocessed mesh to the carousel.
    pub fn gather_mesh(&mut self, entry_id: &str, title: &str, mesh: &TriangleMesh) -> Result<(), SceneError> {
        if mesh.is_empty() {
            return Err(SceneError::EmptyMesh);
        }
        self.gathered.push(GatheredItem {
            entry_id: entry_id.to_string(),
            title: title.to_string(),
            mesh: Arc::new(stl_canonical(mesh)),
        });
        self.undo_stack.push(UndoRecord::Gather);
        Ok(())
    }

    pub fn remove_gathered(&mut self, index: usize) -> Result<GatheredItem, SceneError> {
        if index >= self.gathered.len() {
            return Err(SceneError::GatheredIndex {
                index,
                len: self.gathered.len(),
            });
        }
        let item = self.gathered.remove(index);
        self.undo_stack.push(UndoRecord::RemoveGathered {
            index,
            item: item.clone(),
        });
        Ok(item)
    }

    pub fn place(&mut self, source: &PlaceSource, transform: Transform) -> Result<NodeId, SceneError> {
        let (mesh, node_source) = match source {
            PlaceSource::Gathered(i) => {
                let item = self.gathered.get(*i).ok_or(SceneError::GatheredIndex {
                    index: *i,
                    len: self.gathered.len(),
                })?;
                (
                    item.mesh.clone(),
                    NodeSource::Repository {
                        entry_id: item.entry_id.clone(),
                    },
                )
            }
            PlaceSource::Primitive(spec) => (
                Arc::new(stl_canonical(&make_primitive(spec)?)),
                NodeSource::Primitive { spec: *spec },
            ),
        };
        let id = self.fresh_id();
        self.nodes.push(SceneNode {
            id,
            kind: NodeKind::Model,
            source: node_source,
            transform,
            mesh,
        });
        self.undo_stack.push(UndoRecord::Place { node: id });
        Ok(id)
    }

    /// Replaces a node's transform. Pushes an undo record even when the
    /// transform is unchanged.
    pub fn set_transform(&mut self, id: NodeId, transform: Transform) -> Result<(), SceneError> {
        let pos = self.position(id)?;
        let previous = std::mem::replace(&mut self.nodes[pos].transform, transform);
        self.undo_stack.push(UndoRecord::SetTransform { node: id, previous });
        Ok(())
    }

    /// Copies a node under a new id. The copy is always a model, so
    /// duplicating environment geometry yields a printable candidate.
    pub fn duplicate(&mut self, id: NodeId) -> Result<NodeId, SceneError> {
        let src = self.node(id)?.clone();
        let new_id = self.fresh_id();
        self.nodes.push(SceneNode {
            id: new_id,
            kind: NodeKind::Model,
            source: NodeSource::Duplicate { of: id },
            transform: src.transform,
            mesh: src.mesh,
        });
        self.undo_stack.push(UndoRecord::Duplicate { node: new_id });
        Ok(new_id)
    }

    /// `first op second` in world frame. The result is a new node with an
    /// identity transform; model operands are consumed, environment
    /// operands stay. On error the scene is unchanged.
    pub fn apply_csg(&mut self, op: CsgOp, first: NodeId, second: NodeId) -> Result<NodeId, SceneError> {
        if first == second {
            return Err(SceneError::SameNode);
        }
        let a = self.node(first)?.world_mesh();
        let b = self.node(second)?.world_mesh();
        let result = csg(op, &a, &b)?;
        let id = self.fresh_id();
        let mut consumed = Vec::new();
        let mut kept = Vec::with_capacity(self.nodes.len());
        for (pos, node) in std::mem::take(&mut self.nodes).into_iter().enumerate() {
            if (node.id == first || node.id == second) && node.kind == NodeKind::Model {
                consumed.push((pos, node));
            } else {
                kept.push(node);
            }
        }
        self.nodes = kept;
        self.nodes.push(SceneNode {
            id,
            kind: NodeKind::Model,
            source: NodeSource::Csg { op, first, second },
            transform: Transform::identity(),
            mesh: Arc::new(stl_canonical(&result.mesh)),
        });
        self.undo_stack.push(UndoRecord::Csg { result: id, consumed });
        Ok(id)
    }

    /// Adds a scanned or otherwise captured mesh as environment geometry.
    /// Open scans are accepted with a warning; CSG against them fails until
    /// they are repaired.
    pub fn import_environment(
        &mut self,
        stl_bytes: &[u8],
        pose: Transform,
        label: &str,
    ) -> Result<(NodeId, Vec<String>), SceneError> {
        let loaded = load_stl(stl_bytes)?;
        let mut warnings = loaded.warnings;
        let (mesh, diag) = repair_mesh(&loaded.mesh);
        if mesh.is_empty() {
            return Err(SceneError::EmptyMesh);
        }
        if !mesh.is_watertight() {
            warnings.push(format!(
                "environment `{label}` is not watertight ({} boundary, {} non-manifold edges); it cannot be a CSG operand",
                diag.boundary_edges, diag.non_manifold_edges
            ));
        }
        let id = self.fresh_id();
        self.nodes.push(SceneNode {
            id,
            kind: NodeKind::Environment,
            source: NodeSource::Environment {
                label: label.to_string(),
            },
            transform: pose,
            mesh: Arc::new(stl_canonical(&mesh)),
        });
        self.undo_stack.push(UndoRecord::ImportEnvironment { node: id });
        Ok((id, warnings))
    }

    /// Reverts the latest mutation and returns its record.
    pub fn undo(&mut self) -> Result<UndoRecord, SceneError> {
        let record = self.undo_stack.pop().ok_or(SceneError::NothingToUndo)?;
        match &record {
            UndoRecord::Gather => {
                self.gathered.pop();
            }
            UndoRecord::RemoveGathered { index, item } => self.gathered.insert(*index, item.clone()),
            UndoRecord::Place { node } | UndoRecord::Duplicate { node } | UndoRecord::ImportEnvironment { node } => {
                self.nodes.retain(|n| n.id != *node);
            }
            UndoRecord::SetTransform { node, previous } => {
                if let Some(n) = self.nodes.iter_mut().find(|n| n.id == *node) {
                    n.transform = *previous;
                }
            }
            UndoRecord::Csg { result, consumed } => {
                self.nodes.retain(|n| n.id != *result);
                for (pos, node) in consumed {
                    self.nodes.insert(*pos, node.clone());
                }
            }
        }
        Ok(record)
    }

    /// World-frame binary STL of a model node.
    pub fn export_node_stl(&self, id: NodeId) -> Result<Vec<u8>, SceneError> {
        let node = self.node(id)?;
        if node.kind == NodeKind::Environment {
            return Err(SceneError::NotExportable(id));
        }
        if node.mesh.is_empty() {
            return Err(SceneError::EmptyMesh);
        }
        Ok(write_stl(&node.world_mesh(), StlFormat::Binary)?)
    }

    /// True when every derivation points at an older node, which rules out
    /// cycles since ids only grow.
    pub fn provenance_is_acyclic(&self) -> bool {
        let all = self
            .nodes
            .iter()
            .chain(self.undo_stack.iter().flat_map(|r| match r {
                UndoRecord::Csg { consumed, .. } => consumed.iter().map(|(_, n)| n).collect(),
                _ => Vec::new(),
            }));
        all.into_iter().all(|n| n.source.parents().iter().all(|&p| p < n.id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Vec3;

    fn cube(edge: f64) -> PlaceSource {
        PlaceSource::Primitive(PrimitiveKind::Cube { edge })
    }

    fn scene_with_two_cubes() -> (Scene, NodeId, NodeId) {
        let mut s = Scene::new("t");
        let a = s.place(&cube(2.0), Transform::identity()).unwrap();
        let b = s
            .place(&cube(2.0), Transform::from_translation(Vec3::new(1.0, 0.0, 0.0)))
            .unwrap();
        (s, a, b)
    }

    #[test]
    fn gather_and_remove() {
        let mut s = Scene::new("t");
        let m = make_primitive(&PrimitiveKind::Cube { edge: 1.0 }).unwrap();
        for i in 0..3 {
            s.gather_mesh(&format!("e{i}"), "planter", &m).unwrap();
        }
        assert_eq!(s.gathered.len(), 3);
        let before = s.clone();
        s.remove_gathered(0).unwrap();
        assert_eq!(s.gathered[0].entry_id, "e1");
        assert!(matches!(s.remove_gathered(5), Err(SceneError::GatheredIndex { index: 5, len: 2 })));
        s.undo().unwrap();
        assert!(s.approx_eq(&before, SCENE_TOLERANCE));
    }

    #[test]
    fn undo_place_does_not_reuse_ids() {
        let mut s = Scene::new("t");
        let a = s.place(&cube(1.0), Transform::identity()).unwrap();
        s.undo().unwrap();
        assert!(s.nodes.is_empty());
        let b = s.place(&cube(1.0), Transform::identity()).unwrap();
        assert!(b > a);
    }

    #[test]
    fn identity_transform_update_still_pushes_undo() {
        let (mut s, a, _) = scene_with_two_cubes();
        let depth = s.undo_stack.len();
        s.set_transform(a, Transform::identity()).unwrap();
        assert_eq!(s.undo_stack.len(), depth + 1);
        assert!(matches!(s.set_transform(99, Transform::identity()), Err(SceneError::UnknownNode(99))));
    }

    #[test]
    fn csg_consumes_models_and_undo_restores() {
        let (mut s, a, b) = scene_with_two_cubes();
        let before = s.clone();
        let r = s.apply_csg(CsgOp::Difference, a, b).unwrap();
        assert_eq!(s.nodes.len(), 1);
        assert!((s.summary(r).unwrap().volume - 4.0).abs() < 1e-5);
        s.undo().unwrap();
        assert!(s.approx_eq(&before, SCENE_TOLERANCE));
    }

    #[test]
    fn csg_keeps_environment_operand() {
        let mut s = Scene::new("t");
        let shelf = write_stl(
            &make_primitive(&PrimitiveKind::Cube { edge: 2.0 }).unwrap(),
            StlFormat::Binary,
        )
        .unwrap();
        let (env, warnings) = s
            .import_environment(&shelf, Transform::from_translation(Vec3::new(1.0, 0.0, 0.0)), "shelf")
            .unwrap();
        assert!(warnings.is_empty());
        let part = s.place(&cube(2.0), Transform::identity()).unwrap();
        let r = s.apply_csg(CsgOp::Difference, part, env).unwrap();
        assert!(s.node(env).is_ok());
        assert!(s.node(part).is_err());
        assert!(s.export_node_stl(r).is_ok());
        assert_eq!(s.export_node_stl(env), Err(SceneError::NotExportable(env)));
        assert!(s.provenance_is_acyclic());
    }

    #[test]
    fn csg_error_leaves_scene_unchanged() {
        let mut s = Scene::new("t");
        let mut open = make_primitive(&PrimitiveKind::Cube { edge: 2.0 }).unwrap();
        open.triangles.pop();
        let bytes = write_stl(&open, StlFormat::Binary).unwrap();
        let (env, warnings) = s.import_environment(&bytes, Transform::identity(), "scan").unwrap();
        assert_eq!(warnings.len(), 1);
        let part = s.place(&cube(1.0), Transform::identity()).unwrap();
        let before = s.clone();
        assert!(matches!(s.apply_csg(CsgOp::Difference, part, env), Err(SceneError::Csg(_))));
        assert_eq!(s, before);
        assert_eq!(s.apply_csg(CsgOp::Union, part, part), Err(SceneError::SameNode));
    }

    #[test]
    fn duplicate_is_independent_model() {
        let mut s = Scene::new("t");
        let bytes = write_stl(&make_primitive(&PrimitiveKind::Cube { edge: 2.0 }).unwrap(), StlFormat::Binary).unwrap();
        let (env, _) = s.import_environment(&bytes, Transform::identity(), "pot").unwrap();
        let copy = s.duplicate(env).unwrap();
        assert_eq!(s.node(copy).unwrap().kind, NodeKind::Model);
        assert_eq!(s.node(copy).unwrap().mesh, s.node(env).unwrap().mesh);
        s.set_transform(copy, Transform::uniform_scale(2.0).unwrap()).unwrap();
        assert!(s.node(env).unwrap().transform.is_identity());
    }

    #[test]
    fn scaled_export_has_eight_times_volume() {
        let mut s = Scene::new("t");
        let a = s.place(&cube(2.0), Transform::identity()).unwrap();
        let b = s.place(&cube(2.0), Transform::uniform_scale(2.0).unwrap()).unwrap();
        let va = load_stl(&s.export_node_stl(a).unwrap()).unwrap().mesh.signed_volume();
        let vb = load_stl(&s.export_node_stl(b).unwrap()).unwrap().mesh.signed_volume();
        assert!((vb / va - 8.0).abs() < 1e-6);
    }

    #[test]
    fn export_matches_world_frame_bitwise() {
        let mut s = Scene::new("t");
        let t = Transform::from_euler_deg(10.0, 20.0, 30.0)
            .with_translation(Vec3::new(3.0, -2.0, 1.0))
            .unwrap();
        let a = s.place(&cube(2.0), t).unwrap();
        let expected = write_stl(&apply_transform(&s.node(a).unwrap().mesh, &t), StlFormat::Binary).unwrap();
        assert_eq!(s.export_node_stl(a).unwrap(), expected);
    }

    #[test]
    fn undo_on_fresh_scene() {
        assert_eq!(Scene::new("t").undo(), Err(SceneError::NothingToUndo));
    }
}
