use std::path::{Component, Path, PathBuf};

use super::{RepoBackend, RepoEntry, RepoError};

/// A directory with `index.json` (an array of entry records) and the files
/// it references by relative path.
#[derive(Debug, Clone)]
pub struct FixtureBackend {
    root: PathBuf,
    entries: Vec<RepoEntry>,
}

impl FixtureBackend {
    pub fn open(root: impl AsRef<Path>) -> Result<Self, RepoError> {
        let root = root.as_ref().to_path_buf();
        let index = root.join("index.json");
        let text = std::fs::read_to_string(&index)
            .map_err(|e| RepoError::Unreachable(format!("{}: {e}", index.display())))?;
        let entries: Vec<RepoEntry> =
            serde_json::from_str(&text).map_err(|e| RepoError::Malformed(format!("{}: {e}", index.display())))?;
        Ok(FixtureBackend {
            root,
            entries: entries.into_iter().map(RepoEntry::normalized).collect(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Every indexed entry, remixable or not.
    pub fn all_entries(&self) -> &[RepoEntry] {
        &self.entries
    }

    fn read(&self, rel: &str) -> Result<Vec<u8>, RepoError> {
        let rel = Path::new(rel);
        if rel.components().any(|c| !matches!(c, Component::Normal(_) | Component::CurDir)) {
            return Err(RepoError::Malformed(format!("locator `{}` escapes the fixture root", rel.display())));
        }
        let path = self.root.join(rel);
        std::fs::read(&path).map_err(|e| RepoError::Unreachable(format!("{}: {e}", path.display())))
    }
}

impl RepoBackend for FixtureBackend {
    fn search(&self, query: &str) -> Result<Vec<RepoEntry>, RepoError> {
        Ok(self.entries.iter().filter(|e| e.matches(query)).cloned().collect())
    }

    fn entry(&self, id: &str) -> Result<RepoEntry, RepoError> {
        self.entries
            .iter()
            .find(|e| e.id == id)
            .cloned()
            .ok_or_else(|| RepoError::UnknownEntry(id.to_string()))
    }

    fn fetch_file(&self, locator: &str) -> Result<Vec<u8>, RepoError> {
        self.read(locator)
    }

    fn fetch_thumbnail(&self, entry: &RepoEntry) -> Result<Vec<u8>, RepoError> {
        self.read(&entry.thumbnail_url)
    }
}
