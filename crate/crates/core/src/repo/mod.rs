//! Model repository access: search with license filtering, and a download
//! queue that turns repository files into repaired, simplified meshes.
//!
//! Two interchangeable backends implement [`RepoBackend`]: a hermetic
//! fixture directory and a live JSON-over-HTTP service.

mod fixture;
mod live;
mod queue;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::decimate::{DecimationConfig, DEFAULT_AUTO_THRESHOLD, DEFAULT_QUALITY};

pub use fixture::FixtureBackend;
pub use live::LiveBackend;
pub use queue::{DownloadJob, DownloadQueue, JobId, JobState, MAX_CONCURRENT_DOWNLOADS};

pub const DEFAULT_PAGE_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepoEntry {
    pub id: String,
    pub title: String,
    pub thumbnail_url: String,
    pub license: String,
    /// Always recomputed from `license`; whatever a backend sends is ignored.
    #[serde(default)]
    pub remix_allowed: bool,
    pub file_locators: Vec<String>,
    /// Extra search keywords.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tags: Vec<String>,
}

impl RepoEntry {
    /// Sets `remix_allowed` from the license.
    pub fn normalized(mut self) -> Self {
        self.remix_allowed = license_allows_remix(&self.license);
        self
    }

    /// Case-insensitive substring match on title and tags.
    pub fn matches(&self, query: &str) -> bool {
        let q = query.to_lowercase();
        self.title.to_lowercase().contains(&q) || self.tags.iter().any(|t| t.to_lowercase().contains(&q))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchPage {
    pub query: String,
    pub page: usize,
    pub page_size: usize,
    pub entries: Vec<RepoEntry>,
    /// Remix-allowed matches across all pages.
    pub total_available: usize,
}

/// Whether a license permits derivative works. Unknown strings are treated
/// as not permitting remixes.
pub fn license_allows_remix(license: &str) -> bool {
    let l = license.trim().to_ascii_lowercase().replace(['_', ' '], "-");
    if l.is_empty() {
        return false;
    }
    let denied = ["-nd", "nd-", "noderiv", "no-deriv", "all-rights-reserved", "arr", "proprietary"];
    if denied.iter().any(|d| l.contains(d)) || l == "nd" {
        return false;
    }
    let allowed = [
        "cc0",
        "public-domain",
        "pd",
        "cc-by",
        "by-sa",
        "by-nc",
        "gpl",
        "lgpl",
        "mit",
        "bsd",
    ];
    allowed.iter().any(|a| l == *a || l.starts_with(&format!("{a}-")))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RepoError {
    #[error("search query is empty")]
    EmptyQuery,
    #[error("repository backend unreachable: {0}")]
    Unreachable(String),
    #[error("malformed backend response: {0}")]
    Malformed(String),
    #[error("unknown entry `{0}`")]
    UnknownEntry(String),
    #[error("unknown job `{0}`")]
    UnknownJob(String),
    #[error("entry `{0}` does not permit remixing")]
    NotRemixable(String),
    #[error("entry `{0}` has no downloadable files")]
    NoFiles(String),
}

/// One repository. `search` returns every match in backend order;
/// filtering and paging happen in [`RepoClient`].
pub trait RepoBackend: Send + Sync {
    fn search(&self, query: &str) -> Result<Vec<RepoEntry>, RepoError>;
    fn entry(&self, id: &str) -> Result<RepoEntry, RepoError>;
    fn fetch_file(&self, locator: &str) -> Result<Vec<u8>, RepoError>;
    fn fetch_thumbnail(&self, entry: &RepoEntry) -> Result<Vec<u8>, RepoError>;
}

#[derive(Debug, Clone, PartialEq)]
pub enum BackendConfig {
    Fixture(PathBuf),
    Live {
        base_url: String,
        search_path: String,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RepoConfig {
    pub backend: BackendConfig,
    pub page_size: usize,
    pub decimation: DecimationConfig,
    pub timeout: Duration,
}

impl Default for RepoConfig {
    fn default() -> Self {
        RepoConfig {
            backend: BackendConfig::Fixture(PathBuf::from("./fixtures")),
            page_size: DEFAULT_PAGE_SIZE,
            decimation: DecimationConfig::default(),
            timeout: Duration::from_secs(30),
        }
    }
}

impl RepoConfig {
    /// Reads `REMIXD_REPO_BASE_URL`, `REMIXD_REPO_SEARCH_PATH`,
    /// `REMIXD_FIXTURE_DIR`, `REMIXD_PAGE_SIZE`, `REMIXD_QUALITY` and
    /// `REMIXD_AUTO_THRESHOLD`.
    pub fn from_env() -> Result<Self, String> {
        Self::from_lookup(|k| std::env::var(k).ok())
    }

    pub fn from_lookup(get: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let backend = match get("REMIXD_REPO_BASE_URL").filter(|s| !s.is_empty()) {
            Some(base_url) => BackendConfig::Live {
                base_url,
                search_path: get("REMIXD_REPO_SEARCH_PATH").unwrap_or_else(|| "/search".into()),
            },
            None => BackendConfig::Fixture(get("REMIXD_FIXTURE_DIR").unwrap_or_else(|| "./fixtures".into()).into()),
        };
        fn num<T: std::str::FromStr>(key: &str, raw: Option<String>, default: T) -> Result<T, String> {
            raw.map_or(Ok(default), |v| v.parse().map_err(|_| format!("{key}: cannot parse `{v}`")))
        }
        let cfg = RepoConfig {
            backend,
            page_size: num("REMIXD_PAGE_SIZE", get("REMIXD_PAGE_SIZE"), DEFAULT_PAGE_SIZE)?,
            decimation: DecimationConfig {
                quality: num("REMIXD_QUALITY", get("REMIXD_QUALITY"), DEFAULT_QUALITY)?,
                auto_threshold: num("REMIXD_AUTO_THRESHOLD", get("REMIXD_AUTO_THRESHOLD"), DEFAULT_AUTO_THRESHOLD)?,
            },
            ..Default::default()
        };
        cfg.decimation.validate().map_err(|e| e.to_string())?;
        if cfg.page_size == 0 {
            return Err("REMIXD_PAGE_SIZE must be positive".into());
        }
        Ok(cfg)
    }

    pub fn build_backend(&self) -> Result<Arc<dyn RepoBackend>, RepoError> {
        Ok(match &self.backend {
            BackendConfig::Fixture(dir) => Arc::new(FixtureBackend::open(dir)?),
            BackendConfig::Live { base_url, search_path } => {
                Arc::new(LiveBackend::new(base_url, search_path, self.timeout))
            }
        })
    }
}

/// Search plus download queue over one backend. Cheap to share behind an
/// `Arc`; all methods take `&self`.
pub struct RepoClient {
    backend: Arc<dyn RepoBackend>,
    page_size: usize,
    queue: DownloadQueue,
}

impl RepoClient {
    pub fn new(backend: Arc<dyn RepoBackend>, config: &RepoConfig) -> Self {
        RepoClient {
            queue: DownloadQueue::new(backend.clone(), config.decimation),
            backend,
            page_size: config.page_size,
        }
    }

    pub fn from_config(config: &RepoConfig) -> Result<Self, RepoError> {
        Ok(Self::new(config.build_backend()?, config))
    }

    /// Remix-allowed matches for `query`, `page_size` per page (0-based).
    pub fn search(&self, query: &str, page: usize) -> Result<SearchPage, RepoError> {
        let query = query.trim();
        if query.is_empty() {
            return Err(RepoError::EmptyQuery);
        }
        let allowed: Vec<RepoEntry> = self
            .backend
            .search(query)?
            .into_iter()
            .map(RepoEntry::normalized)
            .filter(|e| e.remix_allowed)
            .collect();
        let total_available = allowed.len();
        let entries = allowed
            .into_iter()
            .skip(page.saturating_mul(self.page_size))
            .take(self.page_size)
            .collect();
        Ok(SearchPage {
            query: query.to_string(),
            page,
            page_size: self.page_size,
            entries,
            total_available,
        })
    }

    /// Looks up a remix-allowed entry by id.
    pub fn entry(&self, id: &str) -> Result<RepoEntry, RepoError> {
        let e = self.backend.entry(id)?.normalized();
        if !e.remix_allowed {
            return Err(RepoError::NotRemixable(id.to_string()));
        }
        Ok(e)
    }

    pub fn thumbnail(&self, id: &str) -> Result<Vec<u8>, RepoError> {
        let e = self.entry(id)?;
        self.backend.fetch_thumbnail(&e)
    }

    pub fn enqueue_download(&self, entry: &RepoEntry) -> Result<DownloadJob, RepoError> {
        let entry = entry.clone().normalized();
        if !entry.remix_allowed {
            return Err(RepoError::NotRemixable(entry.id));
        }
        if entry.file_locators.is_empty() {
            return Err(RepoError::NoFiles(entry.id));
        }
        Ok(self.queue.enqueue(entry))
    }

    pub fn poll_job(&self, id: JobId) -> Result<DownloadJob, RepoError> {
        self.queue.poll(id)
    }

    /// Blocks until the job is ready or failed, or `timeout` passes (then
    /// returns the latest snapshot).
    pub fn wait_for(&self, id: JobId, timeout: Duration) -> Result<DownloadJob, RepoError> {
        self.queue.wait(id, timeout)
    }

    pub fn queue(&self) -> &DownloadQueue {
        &self.queue
    }
}
