//! HTTP facade over the remix pipeline for the browser editor and scripted
//! clients.
//!
//! All routes live under `/api`. Request and response bodies reuse the
//! scene-file field names (`transform` as `{"t", "q", "s"}`, node `id`,
//! `first`/`second` operands). Errors are `{"code", "message", "detail"}`
//! with a code from [`ERROR_CODES`].
//!
//! | method | path | action |
//! |---|---|---|
//! | POST | /search | repository search |
//! | POST | /gather | enqueue a download, optionally into a scene carousel |
//! | GET | /jobs/{id} | download job snapshot |
//! | POST | /scenes | new empty scene |
//! | GET | /scenes/{id} | scene view |
//! | DELETE | /scenes/{id}/gathered/{index} | drop a carousel item |
//! | POST | /scenes/{id}/nodes | place a gathered item or primitive |
//! | PATCH | /scenes/{id}/nodes/{nid}/transform | replace a transform |
//! | POST | /scenes/{id}/nodes/{nid}/duplicate | deep copy |
//! | POST | /scenes/{id}/csg | union / difference / intersection |
//! | POST | /scenes/{id}/undo | revert the last mutation |
//! | POST | /scenes/{id}/environment | multipart STL + pose + label |
//! | GET | /scenes/{id}/nodes/{nid}/mesh.stl | world-frame binary STL |
//! | POST | /scenes/{id}/nodes/{nid}/export/gcode | slice with config overrides |
//! | GET | /thumbnails/{entry_id} | thumbnail bytes |

mod error;
mod state;

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::{DefaultBodyLimit, Multipart, Path, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, patch, post};
use axum::{Json, Router};
use remixd_core::csg::CsgOp;
use remixd_core::par::Execution;
use remixd_core::primitives::PrimitiveKind;
use remixd_core::repo::{DownloadJob, JobId, JobState, RepoClient, RepoConfig, SearchPage};
use remixd_core::scene::{NodeId, NodeKind, NodeSummary, PlaceSource, Scene};
use remixd_core::slicer::slice_to_gcode;
use remixd_core::stl::{load_stl, write_stl, StlFormat};
use remixd_core::transform::Transform;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub use error::{ApiError, ERROR_CODES};
pub use state::{AppState, SceneSlot};

pub const DEFAULT_LISTEN: &str = "127.0.0.1:8787";

/// Largest accepted request body (environment uploads).
pub const MAX_BODY_BYTES: usize = 256 * 1024 * 1024;

/// How long a scene-bound gather waits for its download.
const GATHER_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub listen: String,
    pub repo: RepoConfig,
    pub snapshot_dir: Option<PathBuf>,
    pub snapshot_interval: Duration,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            listen: DEFAULT_LISTEN.into(),
            repo: RepoConfig::default(),
            snapshot_dir: None,
            snapshot_interval: Duration::from_secs(30),
        }
    }
}

/// Binds, restores snapshots and serves until the process is stopped.
pub async fn serve(config: ServiceConfig) -> std::io::Result<()> {
    let repo = RepoClient::from_config(&config.repo).map_err(std::io::Error::other)?;
    let state = Arc::new(AppState::new(Arc::new(repo), config.snapshot_dir.clone()));
    let restored = state.restore_snapshots()?;
    if restored > 0 {
        log::info!("restored {restored} scenes");
    }
    if config.snapshot_dir.is_some() {
        let st = state.clone();
        let every = config.snapshot_interval;
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                let st = st.clone();
                match tokio::task::spawn_blocking(move || st.write_snapshots()).await {
                    Ok(Ok(n)) if n > 0 => log::debug!("snapshotted {n} scenes"),
                    Ok(Err(e)) => log::warn!("snapshot failed: {e}"),
                    _ => {}
                }
            }
        });
    }
    let addr: SocketAddr = config
        .listen
        .parse()
        .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidInput, format!("{}: {e}", config.listen)))?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

pub fn router(state: Arc<AppState>) -> Router {
    let api = Router::new()
        .route("/health", get(|| async { "ok" }))
        .route("/search", post(search))
        .route("/gather", post(gather))
        .route("/jobs/{id}", get(job))
        .route("/scenes", post(create_scene))
        .route("/scenes/{id}", get(get_scene))
        .route("/scenes/{id}/gathered/{index}", delete(remove_gathered))
        .route("/scenes/{id}/nodes", post(place))
        .route("/scenes/{id}/nodes/{nid}/transform", patch(set_transform))
        .route("/scenes/{id}/nodes/{nid}/duplicate", post(duplicate))
        .route("/scenes/{id}/nodes/{nid}/mesh.stl", get(mesh_stl))
        .route("/scenes/{id}/nodes/{nid}/export/gcode", post(export_gcode))
        .route("/scenes/{id}/csg", post(apply_csg))
        .route("/scenes/{id}/undo", post(undo))
        .route("/scenes/{id}/environment", post(import_environment))
        .route("/thumbnails/{entry_id}", get(thumbnail));
    Router::new()
        .nest("/api", api)
        .layer(DefaultBodyLimit::max(MAX_BODY_BYTES))
        .with_state(state)
}

type Shared = State<Arc<AppState>>;
type ApiResult<T> = Result<T, ApiError>;

/// Parses a JSON body; an empty body reads as `{}`.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    let raw: &[u8] = if bytes.iter().all(u8::is_ascii_whitespace) { b"{}" } else { bytes };
    serde_json::from_slice(raw).map_err(|e| ApiError::bad_request("invalid_json", e.to_string()))
}

fn node_id(raw: &str) -> ApiResult<NodeId> {
    raw.parse()
        .map_err(|_| ApiError::bad_request("invalid_path", format!("`{raw}` is not a node id")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GatheredView {
    pub index: usize,
    pub entry_id: String,
    pub title: String,
    pub triangles: usize,
}

/// Everything the editor needs to redraw a scene, without mesh payloads.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SceneView {
    pub scene_id: String,
    pub nodes: Vec<NodeSummary>,
    pub gathered: Vec<GatheredView>,
    pub undo_depth: usize,
    /// Tag of the operation the next undo reverts.
    pub undo_top: Option<String>,
    pub next_id: NodeId,
}

impl SceneView {
    pub fn of(scene: &Scene) -> Self {
        SceneView {
            scene_id: scene.id.clone(),
            nodes: scene.summaries(),
            gathered: scene
                .gathered
                .iter()
                .enumerate()
                .map(|(index, g)| GatheredView {
                    index,
                    entry_id: g.entry_id.clone(),
                    title: g.title.clone(),
                    triangles: g.mesh.triangle_count(),
                })
                .collect(),
            undo_depth: scene.undo_stack.len(),
            undo_top: scene.undo_stack.last().map(|r| r.tag().to_string()),
            next_id: scene.next_id(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MutationResponse {
    /// Node created or changed by the request.
    pub node: Option<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
    pub scene: SceneView,
}

fn mutation(node: Option<NodeId>, warnings: Vec<String>, scene: &Scene) -> Json<MutationResponse> {
    Json(MutationResponse {
        node,
        warnings,
        scene: SceneView::of(scene),
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SearchRequest {
    query: String,
    #[serde(default)]
    page: usize,
}

async fn search(State(st): Shared, bytes: Bytes) -> ApiResult<Json<SearchPage>> {
    let req: SearchRequest = body(&bytes)?;
    let repo = st.repo.clone();
    let page = tokio::task::spawn_blocking(move || repo.search(&req.query, req.page))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(Json(page))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GatherRequest {
    entry_id: String,
    /// When set, the model joins this scene's carousel once ready.
    #[serde(default)]
    scene_id: Option<String>,
}

async fn gather(State(st): Shared, bytes: Bytes) -> ApiResult<(StatusCode, Json<DownloadJob>)> {
    let req: GatherRequest = body(&bytes)?;
    if let Some(id) = &req.scene_id {
        st.slot(id)?;
    }
    let repo = st.repo.clone();
    let entry_id = req.entry_id.clone();
    let job = tokio::task::spawn_blocking(move || {
        let entry = repo.entry(&entry_id)?;
        repo.enqueue_download(&entry)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    if let Some(scene_id) = req.scene_id {
        let st = st.clone();
        let job_id = job.id;
        tokio::spawn(async move {
            let repo = st.repo.clone();
            let done = tokio::task::spawn_blocking(move || repo.wait_for(job_id, GATHER_TIMEOUT)).await;
            match done {
                Ok(Ok(job)) if job.state == JobState::Ready => {
                    if let Err(e) = st.mutate(&scene_id, move |s| s.gather(&job).map_err(ApiError::from)).await {
                        log::warn!("gathering job {job_id} into {scene_id} failed: {}", e.message);
                    }
                }
                Ok(Ok(job)) => log::warn!("job {job_id} ended {:?}: {:?}", job.state, job.failure),
                other => log::warn!("waiting for job {job_id} failed: {other:?}"),
            }
        });
    }
    Ok((StatusCode::ACCEPTED, Json(job)))
}

async fn job(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<DownloadJob>> {
    let id: u64 = id
        .parse()
        .map_err(|_| ApiError::bad_request("invalid_path", format!("`{id}` is not a job id")))?;
    Ok(Json(st.repo.poll_job(JobId(id))?))
}

async fn create_scene(State(st): Shared) -> (StatusCode, Json<SceneView>) {
    let scene = st.create_scene();
    (StatusCode::CREATED, Json(SceneView::of(&scene)))
}

async fn get_scene(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<SceneView>> {
    let snap = st.slot(&id)?.snapshot();
    Ok(Json(tokio::task::spawn_blocking(move || SceneView::of(&snap)).await.map_err(|e| ApiError::internal(e.to_string()))?))
}

async fn remove_gathered(State(st): Shared, Path((id, index)): Path<(String, String)>) -> ApiResult<Json<MutationResponse>> {
    let index: usize = index
        .parse()
        .map_err(|_| ApiError::bad_request("invalid_path", format!("`{index}` is not an index")))?;
    let (_, scene) = st.mutate(&id, move |s| Ok(s.remove_gathered(index)?)).await?;
    Ok(mutation(None, Vec::new(), &scene))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaceRequest {
    #[serde(default)]
    gathered: Option<usize>,
    #[serde(default)]
    primitive: Option<PrimitiveKind>,
    #[serde(default)]
    transform: Transform,
}

async fn place(State(st): Shared, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<MutationResponse>> {
    let req: PlaceRequest = body(&bytes)?;
    let source = match (req.gathered, req.primitive) {
        (Some(i), None) => PlaceSource::Gathered(i),
        (None, Some(p)) => PlaceSource::Primitive(p),
        _ => {
            return Err(ApiError::bad_request(
                "invalid_request",
                "exactly one of `gathered` and `primitive` is required",
            ))
        }
    };
    let t = req.transform;
    let (nid, scene) = st.mutate(&id, move |s| Ok(s.place(&source, t)?)).await?;
    Ok(mutation(Some(nid), Vec::new(), &scene))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformRequest {
    transform: Transform,
}

async fn set_transform(
    State(st): Shared,
    Path((id, nid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let nid = node_id(&nid)?;
    let req: TransformRequest = body(&bytes)?;
    let (_, scene) = st.mutate(&id, move |s| Ok(s.set_transform(nid, req.transform)?)).await?;
    Ok(mutation(Some(nid), Vec::new(), &scene))
}

async fn duplicate(State(st): Shared, Path((id, nid)): Path<(String, String)>) -> ApiResult<Json<MutationResponse>> {
    let nid = node_id(&nid)?;
    let (copy, scene) = st.mutate(&id, move |s| Ok(s.duplicate(nid)?)).await?;
    Ok(mutation(Some(copy), Vec::new(), &scene))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CsgRequest {
    op: CsgOp,
    first: NodeId,
    second: NodeId,
}

async fn apply_csg(State(st): Shared, Path(id): Path<String>, bytes: Bytes) -> ApiResult<Json<MutationResponse>> {
    let req: CsgRequest = body(&bytes)?;
    let (nid, scene) = st.mutate(&id, move |s| Ok(s.apply_csg(req.op, req.first, req.second)?)).await?;
    Ok(mutation(Some(nid), Vec::new(), &scene))
}

async fn undo(State(st): Shared, Path(id): Path<String>) -> ApiResult<Json<MutationResponse>> {
    let (record, scene) = st.mutate(&id, |s| Ok(s.undo()?)).await?;
    Ok(mutation(None, vec![format!("undid {}", record.tag())], &scene))
}

/// Fields: `file` (STL bytes), optional `pose` (transform JSON), optional
/// `label`.
async fn import_environment(State(st): Shared, Path(id): Path<String>, mut form: Multipart) -> ApiResult<Json<MutationResponse>> {
    st.slot(&id)?;
    let bad = |m: String| ApiError::bad_request("invalid_request", m);
    let mut file = None;
    let mut pose = Transform::identity();
    let mut label = String::from("environment");
    while let Some(field) = form.next_field().await.map_err(|e| bad(e.to_string()))? {
        match field.name().unwrap_or_default() {
            "file" => file = Some(field.bytes().await.map_err(|e| bad(e.to_string()))?),
            "pose" => {
                let text = field.bytes().await.map_err(|e| bad(e.to_string()))?;
                pose = serde_json::from_slice(&text).map_err(|e| ApiError::bad_request("invalid_transform", e.to_string()))?;
            }
            "label" => label = field.text().await.map_err(|e| bad(e.to_string()))?,
            other => return Err(bad(format!("unexpected multipart field `{other}`"))),
        }
    }
    let file = file.ok_or_else(|| bad("multipart field `file` is required".into()))?;
    let ((nid, warnings), scene) = st
        .mutate(&id, move |s| Ok(s.import_environment(&file, pose, &label)?))
        .await?;
    Ok(mutation(Some(nid), warnings, &scene))
}

fn octets(bytes: Vec<u8>, content_type: &'static str, extra: &[(&'static str, String)]) -> Response {
    let mut resp = (StatusCode::OK, [(header::CONTENT_TYPE, content_type)], bytes).into_response();
    for (k, v) in extra {
        if let Ok(v) = v.parse() {
            resp.headers_mut().insert(*k, v);
        }
    }
    resp
}

/// World-frame mesh of any node, environment included, for display.
async fn mesh_stl(State(st): Shared, Path((id, nid)): Path<(String, String)>) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    let snap = st.slot(&id)?.snapshot();
    let bytes = tokio::task::spawn_blocking(move || -> ApiResult<Vec<u8>> {
        let node = snap.node(nid)?;
        if node.kind == NodeKind::Model {
            return Ok(snap.export_node_stl(nid)?);
        }
        write_stl(&node.world_mesh(), StlFormat::Binary).map_err(|e| ApiError::new(StatusCode::CONFLICT, "empty_mesh", e.to_string()))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(octets(bytes, "model/stl", &[]))
}

async fn export_gcode(
    State(st): Shared,
    Path((id, nid)): Path<(String, String)>,
    bytes: Bytes,
) -> ApiResult<Response> {
    let nid = node_id(&nid)?;
    let overrides: serde_json::Value = body(&bytes)?;
    let cfg = st.slice_defaults.with_overrides(&overrides)?;
    let snap = st.slot(&id)?.snapshot();
    let (text, layers) = tokio::task::spawn_blocking(move || -> ApiResult<(String, usize)> {
        // Slice exactly what an STL export would contain.
        let stl = snap.export_node_stl(nid)?;
        let mesh = load_stl(&stl).map_err(|e| ApiError::internal(e.to_string()))?.mesh;
        let out = slice_to_gcode(Execution::default(), &mesh, &cfg)?;
        Ok((out.program.to_text(), out.program.layer_count))
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(octets(text.into_bytes(), "application/octet-stream", &[("x-remixd-layers", layers.to_string())]))
}

async fn thumbnail(State(st): Shared, Path(entry_id): Path<String>) -> ApiResult<Response> {
    let repo = st.repo.clone();
    let bytes = tokio::task::spawn_blocking(move || repo.thumbnail(&entry_id))
        .await
        .map_err(|e| ApiError::internal(e.to_string()))??;
    let ct = if bytes.starts_with(b"\x89PNG") {
        "image/png"
    } else if bytes.starts_with(&[0xff, 0xd8]) {
        "image/jpeg"
    } else {
        "application/octet-stream"
    };
    Ok(octets(bytes, ct, &[]))
}
