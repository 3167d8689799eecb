use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use remixd_core::csg::CsgError;
use remixd_core::repo::RepoError;
use remixd_core::scene::SceneError;
use remixd_core::slicer::{GcodeError, SliceError};
use remixd_core::transform::TransformError;
use serde::Serialize;

/// Every error code the API can return.
pub const ERROR_CODES: &[&str] = &[
    "invalid_json",
    "invalid_path",
    "invalid_request",
    "invalid_transform",
    "invalid_primitive",
    "invalid_config",
    "empty_query",
    "same_node",
    "stl_parse_error",
    "corrupt_scene",
    "unknown_scene",
    "unknown_node",
    "unknown_entry",
    "unknown_job",
    "gathered_index_out_of_range",
    "not_remixable",
    "no_files",
    "job_not_ready",
    "not_watertight",
    "operand_too_large",
    "empty_mesh",
    "not_exportable",
    "nothing_to_undo",
    "slice_failed",
    "outside_build_volume",
    "backend_unreachable",
    "backend_malformed",
    "internal",
];

/// JSON error body: `{"code", "message", "detail"?}`.
#[derive(Debug, Clone, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<serde_json::Value>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        debug_assert!(ERROR_CODES.contains(&code), "undocumented code {code}");
        ApiError {
            status,
            code,
            message: message.into(),
            detail: None,
        }
    }

    pub fn with_detail(mut self, detail: serde_json::Value) -> Self {
        self.detail = Some(detail);
        self
    }

    pub fn bad_request(code: &'static str, message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, code, message)
    }

    pub fn unknown_scene(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "unknown_scene", format!("unknown scene `{id}`"))
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(&self)).into_response()
    }
}

impl From<SceneError> for ApiError {
    fn from(e: SceneError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match e {
            SceneError::UnknownNode(id) => {
                ApiError::new(S::NOT_FOUND, "unknown_node", msg).with_detail(serde_json::json!({ "node": id }))
            }
            SceneError::GatheredIndex { index, len } => ApiError::new(S::NOT_FOUND, "gathered_index_out_of_range", msg)
                .with_detail(serde_json::json!({ "index": index, "len": len })),
            SceneError::JobNotReady(_) => ApiError::new(S::CONFLICT, "job_not_ready", msg),
            SceneError::SameNode => ApiError::bad_request("same_node", msg),
            SceneError::Csg(c) => c.into(),
            SceneError::Primitive(_) => ApiError::bad_request("invalid_primitive", msg),
            SceneError::Stl(_) => ApiError::bad_request("stl_parse_error", msg),
            SceneError::EmptyMesh => ApiError::new(S::CONFLICT, "empty_mesh", msg),
            SceneError::NotExportable(_) => ApiError::new(S::CONFLICT, "not_exportable", msg),
            SceneError::NothingToUndo => ApiError::new(S::CONFLICT, "nothing_to_undo", msg),
            SceneError::Version { .. } | SceneError::Corrupt(_) => ApiError::bad_request("corrupt_scene", msg),
        }
    }
}

impl From<CsgError> for ApiError {
    fn from(e: CsgError) -> Self {
        let msg = e.to_string();
        match e {
            CsgError::NonWatertight {
                operand,
                boundary,
                non_manifold,
                inconsistent,
            } => ApiError::new(StatusCode::CONFLICT, "not_watertight", msg).with_detail(serde_json::json!({
                "operand": operand,
                "boundary_edges": boundary,
                "non_manifold_edges": non_manifold,
                "inconsistent_edges": inconsistent,
            })),
            CsgError::TooLarge { operand, triangles, limit } => ApiError::new(StatusCode::CONFLICT, "operand_too_large", msg)
                .with_detail(serde_json::json!({ "operand": operand, "triangles": triangles, "limit": limit })),
        }
    }
}

impl From<RepoError> for ApiError {
    fn from(e: RepoError) -> Self {
        use StatusCode as S;
        let msg = e.to_string();
        match e {
            RepoError::EmptyQuery => ApiError::bad_request("empty_query", msg),
            RepoError::Unreachable(_) => ApiError::new(S::BAD_GATEWAY, "backend_unreachable", msg),
            RepoError::Malformed(_) => ApiError::new(S::BAD_GATEWAY, "backend_malformed", msg),
            RepoError::UnknownEntry(_) => ApiError::new(S::NOT_FOUND, "unknown_entry", msg),
            RepoError::UnknownJob(_) => ApiError::new(S::NOT_FOUND, "unknown_job", msg),
            RepoError::NotRemixable(_) => ApiError::new(S::CONFLICT, "not_remixable", msg),
            RepoError::NoFiles(_) => ApiError::new(S::CONFLICT, "no_files", msg),
        }
    }
}

impl From<SliceError> for ApiError {
    fn from(e: SliceError) -> Self {
        let msg = e.to_string();
        match e {
            SliceError::InvalidConfig(_) => ApiError::bad_request("invalid_config", msg),
            SliceError::NotWatertight { .. } => ApiError::new(StatusCode::CONFLICT, "not_watertight", msg),
            SliceError::OpenContour { .. } | SliceError::Gcode(GcodeError::Malformed { .. }) => {
                ApiError::new(StatusCode::CONFLICT, "slice_failed", msg)
            }
            SliceError::Gcode(GcodeError::OutsideBuildVolume { .. }) => {
                ApiError::new(StatusCode::CONFLICT, "outside_build_volume", msg)
            }
        }
    }
}

impl From<TransformError> for ApiError {
    fn from(e: TransformError) -> Self {
        ApiError::bad_request("invalid_transform", e.to_string())
    }
}
