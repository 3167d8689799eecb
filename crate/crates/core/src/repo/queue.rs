use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Sender};
use serde::{Deserialize, Serialize};

use crate::decimate::{maybe_auto_simplify, DecimationConfig, DecimationStats};
use crate::mesh::TriangleMesh;
use crate::repair::repair_mesh;
use crate::stl::load_stl;

use super::{RepoBackend, RepoEntry, RepoError};

pub const MAX_CONCURRENT_DOWNLOADS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JobId(pub u64);

impl std::fmt::Display for JobId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JobState {
    Queued,
    Downloading,
    Preprocessing,
    Ready,
    Failed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Ready | JobState::Failed)
    }
}

/// Immutable snapshot of a download.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DownloadJob {
    pub id: JobId,
    pub entry_id: String,
    pub title: String,
    pub state: JobState,
    /// Every state the job has been in, in order.
    pub history: Vec<JobState>,
    #[serde(skip)]
    pub mesh: Option<Arc<TriangleMesh>>,
    pub triangles: Option<usize>,
    pub decimation: Option<DecimationStats>,
    pub failure: Option<String>,
}

#[derive(Default)]
struct Table {
    jobs: Vec<DownloadJob>,
    by_entry: HashMap<String, JobId>,
}

struct Shared {
    table: Mutex<Table>,
    changed: Condvar,
    active: AtomicUsize,
    peak: AtomicUsize,
}

impl Shared {
    fn lock(&self) -> MutexGuard<'_, Table> {
        self.table.lock().unwrap_or_else(|p| p.into_inner())
    }

    fn update(&self, id: JobId, f: impl FnOnce(&mut DownloadJob)) {
        let mut t = self.lock();
        let job = &mut t.jobs[id.0 as usize];
        f(job);
        if job.history.last() != Some(&job.state) {
            let s = job.state;
            job.history.push(s);
        }
        drop(t);
        self.changed.notify_all();
    }
}

/// Up to [`MAX_CONCURRENT_DOWNLOADS`] worker threads fed from one channel;
/// further jobs wait queued. Workers exit when the queue is dropped.
pub struct DownloadQueue {
    shared: Arc<Shared>,
    tx: Sender<(JobId, RepoEntry)>,
}

impl DownloadQueue {
    pub fn new(backend: Arc<dyn RepoBackend>, decimation: DecimationConfig) -> Self {
        let shared = Arc::new(Shared {
            table: Mutex::new(Table::default()),
            changed: Condvar::new(),
            active: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let (tx, rx) = unbounded::<(JobId, RepoEntry)>();
        for i in 0..MAX_CONCURRENT_DOWNLOADS {
            let rx = rx.clone();
            let shared = shared.clone();
            let backend = backend.clone();
            std::thread::Builder::new()
                .name(format!("remixd-download-{i}"))
                .spawn(move || {
                    for (id, entry) in rx {
                        let now = shared.active.fetch_add(1, Ordering::SeqCst) + 1;
                        shared.peak.fetch_max(now, Ordering::SeqCst);
                        process(&shared, backend.as_ref(), &decimation, id, &entry);
                        shared.active.fetch_sub(1, Ordering::SeqCst);
                    }
                })
                .expect("spawn download worker");
        }
        DownloadQueue { shared, tx }
    }

    /// Queues `entry`. An entry already queued, in flight or ready returns
    /// its existing job; a failed one is retried as a new job.
    pub fn enqueue(&self, entry: RepoEntry) -> DownloadJob {
        let mut t = self.shared.lock();
        if let Some(&id) = t.by_entry.get(&entry.id) {
            let job = &t.jobs[id.0 as usize];
            if job.state != JobState::Failed {
                return job.clone();
            }
        }
        let id = JobId(t.jobs.len() as u64);
        let job = DownloadJob {
            id,
            entry_id: entry.id.clone(),
            title: entry.title.clone(),
            state: JobState::Queued,
            history: vec![JobState::Queued],
            mesh: None,
            triangles: None,
            decimation: None,
            failure: None,
        };
        t.jobs.push(job.clone());
        t.by_entry.insert(entry.id.clone(), id);
        drop(t);
        self.tx.send((id, entry)).expect("download workers alive");
        job
    }

    pub fn poll(&self, id: JobId) -> Result<DownloadJob, RepoError> {
        self.shared
            .lock()
            .jobs
            .get(id.0 as usize)
            .cloned()
            .ok_or_else(|| RepoError::UnknownJob(id.to_string()))
    }

    pub fn wait(&self, id: JobId, timeout: Duration) -> Result<DownloadJob, RepoError> {
        let deadline = Instant::now() + timeout;
        let mut t = self.shared.lock();
        loop {
            let job = t
                .jobs
                .get(id.0 as usize)
                .cloned()
                .ok_or_else(|| RepoError::UnknownJob(id.to_string()))?;
            let now = Instant::now();
            if job.state.is_terminal() || now >= deadline {
                return Ok(job);
            }
            t = self
                .shared
                .changed
                .wait_timeout(t, deadline - now)
                .unwrap_or_else(|p| p.into_inner())
                .0;
        }
    }

    pub fn jobs(&self) -> Vec<DownloadJob> {
        self.shared.lock().jobs.clone()
    }

    /// Highest number of simultaneously running downloads so far.
    pub fn peak_concurrency(&self) -> usize {
        self.shared.peak.load(Ordering::SeqCst)
    }
}

fn fail(shared: &Shared, id: JobId, reason: String) {
    log::warn!("download job {id} failed: {reason}");
    shared.update(id, |j| {
        j.state = JobState::Failed;
        j.failure = Some(reason);
    });
}

fn process(shared: &Shared, backend: &dyn RepoBackend, decimation: &DecimationConfig, id: JobId, entry: &RepoEntry) {
    shared.update(id, |j| j.state = JobState::Downloading);
    let bytes = match backend.fetch_file(&entry.file_locators[0]) {
        Ok(b) => b,
        Err(e) => return fail(shared, id, format!("download failed: {e}")),
    };
    shared.update(id, |j| j.state = JobState::Preprocessing);
    let loaded = match load_stl(&bytes) {
        Ok(l) => l,
        Err(e) => return fail(shared, id, format!("stl parse error: {e}")),
    };
    let (repaired, diag) = repair_mesh(&loaded.mesh);
    if repaired.is_empty() {
        return fail(shared, id, "mesh is empty after repair".into());
    }
    if !diag.is_clean() {
        log::info!("entry {}: repair {:?}", entry.id, diag);
    }
    let (mesh, stats) = match maybe_auto_simplify(&repaired, decimation) {
        Ok(r) => r,
        Err(e) => return fail(shared, id, format!("simplification failed: {e}")),
    };
    shared.update(id, |j| {
        j.triangles = Some(mesh.triangle_count());
        j.decimation = stats;
        j.mesh = Some(Arc::new(mesh));
        j.state = JobState::Ready;
    });
}
