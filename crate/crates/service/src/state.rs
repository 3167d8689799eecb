use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use remixd_core::repo::RepoClient;
use remixd_core::scene::{load_scene, save_scene, Scene};
use remixd_core::slicer::SliceConfig;

use crate::error::ApiError;

/// One scene: a writer lock that serializes mutations, and the last
/// committed snapshot that readers clone without waiting on writers.
pub struct SceneSlot {
    writer: tokio::sync::Mutex<()>,
    committed: RwLock<Arc<Scene>>,
    revision: AtomicU64,
    saved_revision: AtomicU64,
}

impl SceneSlot {
    fn new(scene: Scene) -> Self {
        SceneSlot {
            writer: tokio::sync::Mutex::new(()),
            committed: RwLock::new(Arc::new(scene)),
            revision: AtomicU64::new(1),
            saved_revision: AtomicU64::new(0),
        }
    }

    pub fn snapshot(&self) -> Arc<Scene> {
        self.committed.read().unwrap_or_else(|p| p.into_inner()).clone()
    }

    fn commit(&self, scene: Arc<Scene>) {
        *self.committed.write().unwrap_or_else(|p| p.into_inner()) = scene;
        self.revision.fetch_add(1, Ordering::SeqCst);
    }
}

pub struct AppState {
    pub repo: Arc<RepoClient>,
    pub slice_defaults: SliceConfig,
    scenes: RwLock<HashMap<String, Arc<SceneSlot>>>,
    next_scene: AtomicU64,
    snapshot_dir: Option<PathBuf>,
}

impl AppState {
    pub fn new(repo: Arc<RepoClient>, snapshot_dir: Option<PathBuf>) -> Self {
        AppState {
            repo,
            slice_defaults: SliceConfig::default(),
            scenes: RwLock::new(HashMap::new()),
            next_scene: AtomicU64::new(1),
            snapshot_dir,
        }
    }

    pub fn slot(&self, id: &str) -> Result<Arc<SceneSlot>, ApiError> {
        self.scenes
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::unknown_scene(id))
    }

    pub fn create_scene(&self) -> Arc<Scene> {
        let mut scenes = self.scenes.write().unwrap_or_else(|p| p.into_inner());
        let id = loop {
            let candidate = format!("scene-{}", self.next_scene.fetch_add(1, Ordering::SeqCst));
            if !scenes.contains_key(&candidate) {
                break candidate;
            }
        };
        let slot = Arc::new(SceneSlot::new(Scene::new(id.clone())));
        let snap = slot.snapshot();
        scenes.insert(id, slot);
        snap
    }

    /// Applies `f` to a copy of the committed scene on a blocking thread and
    /// commits the copy if `f` succeeds. Mutations of one scene run strictly
    /// one after another; on error the scene is left untouched.
    pub async fn mutate<R, F>(&self, id: &str, f: F) -> Result<(R, Arc<Scene>), ApiError>
    where
        R: Send + 'static,
        F: FnOnce(&mut Scene) -> Result<R, ApiError> + Send + 'static,
    {
        let slot = self.slot(id)?;
        let _writer = slot.writer.lock().await;
        let base = slot.snapshot();
        let (scene, r) = tokio::task::spawn_blocking(move || {
            let mut scene = (*base).clone();
            f(&mut scene).map(|r| (scene, r))
        })
        .await
        .map_err(|e| ApiError::internal(format!("mutation task failed: {e}")))??;
        let scene = Arc::new(scene);
        slot.commit(scene.clone());
        Ok((r, scene))
    }

    /// Loads every `*.json` scene file in the snapshot directory.
    pub fn restore_snapshots(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.snapshot_dir else { return Ok(0) };
        std::fs::create_dir_all(dir)?;
        let mut n = 0;
        let mut scenes = self.scenes.write().unwrap_or_else(|p| p.into_inner());
        for entry in std::fs::read_dir(dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "json") {
                match std::fs::read(&path).map_err(|e| e.to_string()).and_then(|b| load_scene(&b).map_err(|e| e.to_string())) {
                    Ok(scene) => {
                        let slot = SceneSlot::new(scene.clone());
                        slot.saved_revision.store(1, Ordering::SeqCst);
                        scenes.insert(scene.id.clone(), Arc::new(slot));
                        n += 1;
                    }
                    Err(e) => log::warn!("skipping snapshot {}: {e}", path.display()),
                }
            }
        }
        Ok(n)
    }

    /// Writes scenes changed since their last snapshot. Returns how many
    /// were written.
    pub fn write_snapshots(&self) -> std::io::Result<usize> {
        let Some(dir) = &self.snapshot_dir else { return Ok(0) };
        let slots: Vec<Arc<SceneSlot>> = self.scenes.read().unwrap_or_else(|p| p.into_inner()).values().cloned().collect();
        let mut n = 0;
        for slot in slots {
            let rev = slot.revision.load(Ordering::SeqCst);
            if slot.saved_revision.load(Ordering::SeqCst) == rev {
                continue;
            }
            let scene = slot.snapshot();
            write_atomically(&dir.join(format!("{}.json", scene.id)), &save_scene(&scene))?;
            slot.saved_revision.store(rev, Ordering::SeqCst);
            n += 1;
        }
        Ok(n)
    }
}

fn write_atomically(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(tmp, path)
}
