//! Geometry kernel behind the remix pipeline.

pub mod csg;
pub mod decimate;
pub mod mesh;
pub mod par;
pub mod primitives;
pub mod repair;
pub mod repo;
pub mod scene;
pub mod slicer;
pub mod stl;
pub mod synth;
pub mod transform;

pub use mesh::{Aabb, MeshError, TriangleMesh, Vec3};
