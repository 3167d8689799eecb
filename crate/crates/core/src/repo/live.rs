use std::time::Duration;

use ureq::Agent;

use super::{RepoBackend, RepoEntry, RepoError};

/// JSON-over-HTTP repository. `GET {base}{search_path}?q=...` returns an
/// array of entry records; locators and thumbnail URLs are absolute URLs or
/// paths relative to the base.
pub struct LiveBackend {
    base_url: String,
    search_path: String,
    agent: Agent,
}

impl LiveBackend {
    pub fn new(base_url: &str, search_path: &str, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder().timeout_global(Some(timeout)).build().into();
        LiveBackend {
            base_url: base_url.trim_end_matches('/').to_string(),
            search_path: search_path.to_string(),
            agent,
        }
    }

    fn url(&self, locator: &str) -> String {
        if locator.starts_with("http://") || locator.starts_with("https://") {
            locator.to_string()
        } else {
            format!("{}/{}", self.base_url, locator.trim_start_matches('/'))
        }
    }

    fn get_bytes(&self, url: &str) -> Result<Vec<u8>, RepoError> {
        let mut resp = self
            .agent
            .get(url)
            .call()
            .map_err(|e| RepoError::Unreachable(format!("{url}: {e}")))?;
        resp.body_mut()
            .with_config()
            .limit(u64::MAX)
            .read_to_vec()
            .map_err(|e| RepoError::Unreachable(format!("{url}: {e}")))
    }

    fn search_raw(&self, query: &str) -> Result<Vec<RepoEntry>, RepoError> {
        let url = self.url(&self.search_path);
        let mut resp = self
            .agent
            .get(&url)
            .query("q", query)
            .call()
            .map_err(|e| RepoError::Unreachable(format!("{url}: {e}")))?;
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| RepoError::Unreachable(format!("{url}: {e}")))?;
        serde_json::from_str(&text).map_err(|e| RepoError::Malformed(e.to_string()))
    }
}

impl RepoBackend for LiveBackend {
    fn search(&self, query: &str) -> Result<Vec<RepoEntry>, RepoError> {
        self.search_raw(query)
    }

    /// The wire contract has no lookup endpoint; ids are resolved through a
    /// search for the id itself.
    fn entry(&self, id: &str) -> Result<RepoEntry, RepoError> {
        self.search_raw(id)?
            .into_iter()
            .find(|e| e.id == id)
            .ok_or_else(|| RepoError::UnknownEntry(id.to_string()))
    }

    fn fetch_file(&self, locator: &str) -> Result<Vec<u8>, RepoError> {
        self.get_bytes(&self.url(locator))
    }

    fn fetch_thumbnail(&self, entry: &RepoEntry) -> Result<Vec<u8>, RepoError> {
        self.get_bytes(&self.url(&entry.thumbnail_url))
    }
}
