//! Scale-rotate-translate placement of meshes.

use nalgebra::{Quaternion, UnitQuaternion};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::mesh::{TriangleMesh, Vec3};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransformError {
    #[error("rotation quaternion has norm {0}, expected 1")]
    NonUnitRotation(f64),
    #[error("scale factors must be positive and finite, got {0:?}")]
    InvalidScale([f64; 3]),
    #[error("translation must be finite")]
    NonFiniteTranslation,
}

/// Maps a point by per-axis scale, then rotation, then translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transform {
    translation: Vec3,
    rotation: UnitQuaternion<f64>,
    scale: Vec3,
}

impl Default for Transform {
    fn default() -> Self {
        Self::identity()
    }
}

impl Transform {
    pub fn new(translation: Vec3, rotation: UnitQuaternion<f64>, scale: Vec3) -> Result<Self, TransformError> {
        Self::from_parts(translation, *rotation.quaternion(), scale)
    }

    /// Validates raw parts. The quaternion must already be unit length
    /// within 1e-9; it is stored as given.
    pub fn from_parts(translation: Vec3, rotation: Quaternion<f64>, scale: Vec3) -> Result<Self, TransformError> {
        if !translation.iter().all(|c| c.is_finite()) {
            return Err(TransformError::NonFiniteTranslation);
        }
        let norm = rotation.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(TransformError::NonUnitRotation(norm));
        }
        if !scale.iter().all(|s| s.is_finite() && *s > 0.0) {
            return Err(TransformError::InvalidScale([scale.x, scale.y, scale.z]));
        }
        Ok(Transform {
            translation,
            rotation: UnitQuaternion::new_unchecked(rotation),
            scale,
        })
    }

    pub fn identity() -> Self {
        Transform {
            translation: Vec3::zeros(),
            rotation: UnitQuaternion::identity(),
            scale: Vec3::repeat(1.0),
        }
    }

    pub fn from_translation(t: Vec3) -> Self {
        Transform {
            translation: t,
            ..Self::identity()
        }
    }

    pub fn uniform_scale(s: f64) -> Result<Self, TransformError> {
        Self::identity().with_scale(Vec3::repeat(s))
    }

    /// Rotation from intrinsic roll/pitch/yaw in degrees (x, y, z).
    pub fn from_euler_deg(x: f64, y: f64, z: f64) -> Self {
        Transform {
            rotation: UnitQuaternion::from_euler_angles(x.to_radians(), y.to_radians(), z.to_radians()),
            ..Self::identity()
        }
    }

    pub fn with_translation(mut self, t: Vec3) -> Result<Self, TransformError> {
        if !t.iter().all(|c| c.is_finite()) {
            return Err(TransformError::NonFiniteTranslation);
        }
        self.translation = t;
        Ok(self)
    }

    pub fn with_rotation(mut self, r: UnitQuaternion<f64>) -> Self {
        self.rotation = r;
        self
    }

    pub fn with_scale(mut self, s: Vec3) -> Result<Self, TransformError> {
        if !s.iter().all(|c| c.is_finite() && *c > 0.0) {
            return Err(TransformError::InvalidScale([s.x, s.y, s.z]));
        }
        self.scale = s;
        Ok(self)
    }

    pub fn translation(&self) -> Vec3 {
        self.translation
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.rotation
    }

    pub fn scale(&self) -> Vec3 {
        self.scale
    }

    pub fn is_identity(&self) -> bool {
        *self == Self::identity()
    }

    pub fn apply_point(&self, p: &Vec3) -> Vec3 {
        self.rotation * p.component_mul(&self.scale) + self.translation
    }

    pub fn apply_inverse_point(&self, p: &Vec3) -> Vec3 {
        (self.rotation.inverse() * (p - self.translation)).component_div(&self.scale)
    }

    /// Componentwise comparison with tolerance on every stored number.
    pub fn approx_eq(&self, other: &Transform, tol: f64) -> bool {
        let q1 = self.rotation.quaternion().coords;
        let q2 = other.rotation.quaternion().coords;
        (self.translation - other.translation).amax() <= tol
            && (q1 - q2).amax() <= tol
            && (self.scale - other.scale).amax() <= tol
    }
}

/// Maps every vertex by `t`. Winding is kept because all scale factors are
/// positive.
pub fn apply_transform(mesh: &TriangleMesh, t: &Transform) -> TriangleMesh {
    if t.is_identity() {
        return mesh.clone();
    }
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| t.apply_point(v)).collect(),
        triangles: mesh.triangles.clone(),
    }
}

pub fn apply_inverse_transform(mesh: &TriangleMesh, t: &Transform) -> TriangleMesh {
    TriangleMesh {
        vertices: mesh.vertices.iter().map(|v| t.apply_inverse_point(v)).collect(),
        triangles: mesh.triangles.clone(),
    }
}

/// Wire form used by scene files and the HTTP API: quaternion is w-first.
#[derive(Serialize, Deserialize)]
struct TransformRepr {
    t: [f64; 3],
    q: [f64; 4],
    s: [f64; 3],
}

impl Serialize for Transform {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let q = self.rotation.quaternion();
        TransformRepr {
            t: [self.translation.x, self.translation.y, self.translation.z],
            q: [q.w, q.i, q.j, q.k],
            s: [self.scale.x, self.scale.y, self.scale.z],
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Transform {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let r = TransformRepr::deserialize(deserializer)?;
        Transform::from_parts(
            Vec3::from(r.t),
            Quaternion::new(r.q[0], r.q[1], r.q[2], r.q[3]),
            Vec3::from(r.s),
        )
        .map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::test_shapes::*;

    #[test]
    fn identity_leaves_mesh_unchanged() {
        let cube = unit_cube();
        assert_eq!(apply_transform(&cube, &Transform::identity()), cube);
    }

    #[test]
    fn uniform_scale_multiplies_volume_by_cube() {
        let t = Transform::uniform_scale(2.0).unwrap();
        let scaled = apply_transform(&unit_cube(), &t);
        assert!((scaled.signed_volume() - 8.0).abs() < 1e-12);
        assert!(scaled.is_watertight());
    }

    #[test]
    fn transform_then_inverse_recovers_vertices() {
        let t = Transform::from_euler_deg(30.0, -45.0, 110.0)
            .with_scale(Vec3::new(0.5, 2.0, 3.0))
            .unwrap()
            .with_translation(Vec3::new(10.0, -4.0, 2.5))
            .unwrap();
        let cube = box_mesh(Vec3::new(-3.0, 0.0, 1.0), Vec3::new(4.0, 2.0, 9.0));
        let back = apply_inverse_transform(&apply_transform(&cube, &t), &t);
        for (a, b) in cube.vertices.iter().zip(&back.vertices) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn scale_is_applied_before_rotation() {
        let t = Transform::from_euler_deg(0.0, 0.0, 90.0)
            .with_scale(Vec3::new(2.0, 1.0, 1.0))
            .unwrap();
        let p = t.apply_point(&Vec3::x());
        assert!((p - Vec3::new(0.0, 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn invalid_parts_are_rejected() {
        assert!(matches!(
            Transform::from_parts(Vec3::zeros(), Quaternion::new(2.0, 0.0, 0.0, 0.0), Vec3::repeat(1.0)),
            Err(TransformError::NonUnitRotation(_))
        ));
        assert!(matches!(Transform::uniform_scale(0.0), Err(TransformError::InvalidScale(_))));
        assert!(matches!(Transform::uniform_scale(-1.0), Err(TransformError::InvalidScale(_))));
    }

    #[test]
    fn wire_format_is_w_first() {
        let t = Transform::from_translation(Vec3::new(1.0, 2.0, 3.0));
        let json = serde_json::to_value(t).unwrap();
        assert_eq!(json["q"], serde_json::json!([1.0, 0.0, 0.0, 0.0]));
        assert_eq!(json["t"], serde_json::json!([1.0, 2.0, 3.0]));
        let back: Transform = serde_json::from_value(json).unwrap();
        assert_eq!(back, t);
    }
}
