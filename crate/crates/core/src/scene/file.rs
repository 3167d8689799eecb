//! Versioned JSON scene file with meshes embedded as base64 binary STL.

use serde::{Deserialize, Serialize};

use super::{GatheredItem, NodeId, Scene, SceneError, SceneNode, UndoRecord};

pub const SCENE_FILE_VERSION: u64 = 1;

#[derive(Serialize)]
struct SceneFileOut<'a> {
    version: u64,
    scene_id: &'a str,
    next_id: NodeId,
    nodes: &'a [SceneNode],
    gathered: &'a [GatheredItem],
    undo: &'a [UndoRecord],
}

#[derive(Deserialize)]
struct SceneFileIn {
    scene_id: String,
    next_id: NodeId,
    nodes: Vec<SceneNode>,
    gathered: Vec<GatheredItem>,
    undo: Vec<UndoRecord>,
}

#[derive(Deserialize)]
struct VersionProbe {
    version: u64,
}

pub fn save_scene(scene: &Scene) -> Vec<u8> {
    serde_json::to_vec(&SceneFileOut {
        version: SCENE_FILE_VERSION,
        scene_id: &scene.id,
        next_id: scene.next_id,
        nodes: &scene.nodes,
        gathered: &scene.gathered,
        undo: &scene.undo_stack,
    })
    .expect("scene serializes")
}

pub fn load_scene(bytes: &[u8]) -> Result<Scene, SceneError> {
    let probe: VersionProbe = serde_json::from_slice(bytes).map_err(|e| SceneError::Corrupt(e.to_string()))?;
    if probe.version != SCENE_FILE_VERSION {
        return Err(SceneError::Version {
            found: probe.version,
            expected: SCENE_FILE_VERSION,
        });
    }
    let doc: SceneFileIn = serde_json::from_slice(bytes).map_err(|e| SceneError::Corrupt(e.to_string()))?;
    let mut ids: Vec<NodeId> = doc.nodes.iter().map(|n| n.id).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(SceneError::Corrupt("duplicate node id".into()));
    }
    if ids.last().is_some_and(|&max| max >= doc.next_id) {
        return Err(SceneError::Corrupt("next_id does not exceed every node id".into()));
    }
    Ok(Scene {
        id: doc.scene_id,
        nodes: doc.nodes,
        gathered: doc.gathered,
        undo_stack: doc.undo,
        next_id: doc.next_id,
    })
}

/// Serde adapter: mesh as base64 binary STL; the empty mesh is "".
pub(crate) mod mesh_b64 {
    use std::sync::Arc;

    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::mesh::TriangleMesh;
    use crate::stl::{load_stl, write_stl, StlFormat};

    pub fn serialize<S: Serializer>(mesh: &Arc<TriangleMesh>, s: S) -> Result<S::Ok, S::Error> {
        if mesh.is_empty() {
            return s.serialize_str("");
        }
        let bytes = write_stl(mesh, StlFormat::Binary).map_err(serde::ser::Error::custom)?;
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Arc<TriangleMesh>, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() {
            return Ok(Arc::new(TriangleMesh::default()));
        }
        let bytes = STANDARD.decode(text.as_bytes()).map_err(D::Error::custom)?;
        let loaded = load_stl(&bytes).map_err(D::Error::custom)?;
        Ok(Arc::new(loaded.mesh))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csg::CsgOp;
    use crate::mesh::Vec3;
    use crate::primitives::PrimitiveKind;
    use crate::scene::PlaceSource;
    use crate::transform::Transform;

    #[test]
    fn empty_scene_roundtrips() {
        let s = Scene::new("empty");
        assert_eq!(load_scene(&save_scene(&s)).unwrap(), s);
    }

    #[test]
    fn populated_scene_roundtrips_exactly() {
        let mut s = Scene::new("w");
        let a = s
            .place(&PlaceSource::Primitive(PrimitiveKind::Cylinder { radius: 5.0, height: 10.0, segments: 32 }), Transform::from_euler_deg(0.1, 0.2, 0.3))
            .unwrap();
        let b = s
            .place(&PlaceSource::Primitive(PrimitiveKind::Cube { edge: 4.0 }), Transform::from_translation(Vec3::new(4.0, 0.3, 1.0 / 3.0)))
            .unwrap();
        s.apply_csg(CsgOp::Difference, a, b).unwrap();
        s.gather_mesh("x", "thing", &crate::primitives::make_primitive(&PrimitiveKind::Cube { edge: 1.0 }).unwrap())
            .unwrap();
        s.remove_gathered(0).unwrap();
        let back = load_scene(&save_scene(&s)).unwrap();
        assert_eq!(back, s);
        assert_eq!(back.next_id(), s.next_id());
    }

    #[test]
    fn field_names_follow_the_file_format() {
        let mut s = Scene::new("f");
        s.place(&PlaceSource::Primitive(PrimitiveKind::Cube { edge: 1.0 }), Transform::identity())
            .unwrap();
        let v: serde_json::Value = serde_json::from_slice(&save_scene(&s)).unwrap();
        assert_eq!(v["version"], 1);
        assert_eq!(v["scene_id"], "f");
        let node = &v["nodes"][0];
        for key in ["id", "kind", "source", "transform", "mesh_stl_b64"] {
            assert!(node.get(key).is_some(), "{key}");
        }
        assert_eq!(node["transform"]["q"], serde_json::json!([1.0, 0.0, 0.0, 0.0]));
        assert_eq!(v["undo"][0]["op"], "place");
    }

    #[test]
    fn bad_payloads_are_reported() {
        let bytes = save_scene(&Scene::new("x"));
        assert!(matches!(load_scene(&bytes[..bytes.len() / 2]), Err(SceneError::Corrupt(_))));
        let v2 = String::from_utf8(bytes).unwrap().replace("\"version\":1", "\"version\":2");
        assert_eq!(
            load_scene(v2.as_bytes()),
            Err(SceneError::Version { found: 2, expected: 1 })
        );
    }
}
