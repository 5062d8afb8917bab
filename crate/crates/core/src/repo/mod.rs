//! Read-only repository access pinned to one reference.
//!
//! A [`RepoSnapshot`] wraps a backend (a local directory or a GitLab-v4
//! compatible API) and never issues anything but reads. Tree listings and
//! file contents are cached for the lifetime of the snapshot; the ref cannot
//! change, so cached values never go stale.

mod gitlab;
mod local;

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Arc, RwLock};

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use gitlab::{GitLabBackend, TOKEN_ENV_VAR};
pub use local::LocalDirBackend;

#[derive(Debug, Error)]
pub enum RepoError {
    #[error("repository provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("ref `{0}` not found")]
    RefNotFound(String),
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("cannot decode {path}: {reason}")]
    DecodeError { path: String, reason: String },
    #[error("invalid repository path `{0}`")]
    InvalidPath(String),
    #[error("invalid class name `{0}`")]
    InvalidClassName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provider {
    RemoteApi,
    LocalDir,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    File,
    Directory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub kind: EntryKind,
    /// Known for local files; the tree API of remote providers does not report it.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub size_bytes: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileContent {
    pub path: String,
    pub text: String,
    pub byte_len: usize,
    /// Lowercase hex SHA-256 of the decoded bytes.
    pub sha256: String,
}

impl FileContent {
    pub(crate) fn from_bytes(path: &str, bytes: Vec<u8>) -> Result<Self, RepoError> {
        let sha256 = hex::encode(Sha256::digest(&bytes));
        let byte_len = bytes.len();
        let text = String::from_utf8(bytes).map_err(|e| RepoError::DecodeError {
            path: path.to_string(),
            reason: format!("not valid UTF-8: {e}"),
        })?;
        Ok(Self {
            path: path.to_string(),
            text,
            byte_len,
            sha256,
        })
    }
}

/// Class simple-name to repository paths. Ambiguous names keep every path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassInventory {
    pub entries: BTreeMap<String, Vec<String>>,
    pub snapshot_ref: String,
    pub built_at: DateTime<Utc>,
}

impl ClassInventory {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_count(&self) -> usize {
        self.entries.len()
    }

    pub fn paths(&self, class_name: &str) -> &[String] {
        self.entries.get(class_name).map(Vec::as_slice).unwrap_or(&[])
    }
}

/// The storage a snapshot reads from. Implementations must be read-only.
pub trait RepoBackend: Send + Sync {
    fn provider(&self) -> Provider;

    /// Every file and directory at the pinned ref, in any order.
    fn list_all(&self, git_ref: &str) -> Result<Vec<FileEntry>, RepoError>;

    /// Raw (decoded) bytes of one file at the pinned ref.
    fn read_file(&self, git_ref: &str, path: &str) -> Result<Vec<u8>, RepoError>;
}

/// Normalizes a repository-relative path: forward slashes, no `.` or empty
/// segments. `..` is rejected.
pub fn normalize_path(path: &str) -> Result<String, RepoError> {
    let mut parts = Vec::new();
    for segment in path.split(['/', '\\']) {
        match segment {
            "" | "." => {}
            ".." => return Err(RepoError::InvalidPath(path.to_string())),
            s => parts.push(s),
        }
    }
    Ok(parts.join("/"))
}

pub struct RepoSnapshot {
    project_id: String,
    git_ref: String,
    base_url: Option<String>,
    backend: Box<dyn RepoBackend>,
    tree: RwLock<Option<Arc<Vec<FileEntry>>>>,
    files: RwLock<HashMap<String, Arc<FileContent>>>,
}

impl fmt::Debug for RepoSnapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RepoSnapshot")
            .field("provider", &self.provider())
            .field("project_id", &self.project_id)
            .field("ref", &self.git_ref)
            .field("base_url", &self.base_url)
            .finish()
    }
}

impl RepoSnapshot {
    /// A snapshot over a local directory. `git_ref` is a label recorded in
    /// the audit trail; the directory contents are the state being pinned.
    pub fn local(root: impl Into<std::path::PathBuf>, git_ref: impl Into<String>) -> Self {
        let root = root.into();
        let project_id = root
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "local".to_string());
        Self::with_backend(project_id, git_ref, None, Box::new(LocalDirBackend::new(root)))
    }

    pub fn gitlab(backend: GitLabBackend, git_ref: impl Into<String>) -> Self {
        let project_id = backend.project_id().to_string();
        let base_url = Some(backend.base_url().to_string());
        Self::with_backend(project_id, git_ref, base_url, Box::new(backend))
    }

    pub fn with_backend(
        project_id: impl Into<String>,
        git_ref: impl Into<String>,
        base_url: Option<String>,
        backend: Box<dyn RepoBackend>,
    ) -> Self {
        Self {
            project_id: project_id.into(),
            git_ref: git_ref.into(),
            base_url,
            backend,
            tree: RwLock::new(None),
            files: RwLock::new(HashMap::new()),
        }
    }

    pub fn provider(&self) -> Provider {
        self.backend.provider()
    }

    pub fn project_id(&self) -> &str {
        &self.project_id
    }

    pub fn git_ref(&self) -> &str {
        &self.git_ref
    }

    pub fn base_url(&self) -> Option<&str> {
        self.base_url.as_deref()
    }

    fn full_tree(&self) -> Result<Arc<Vec<FileEntry>>, RepoError> {
        if let Some(tree) = self.tree.read().expect("tree cache poisoned").as_ref() {
            return Ok(Arc::clone(tree));
        }
        let mut entries = self.backend.list_all(&self.git_ref)?;
        entries.sort_by(|a, b| a.path.cmp(&b.path));
        entries.dedup_by(|a, b| a.path == b.path);
        let tree = Arc::new(entries);
        // Concurrent fillers compute identical listings; last write wins.
        *self.tree.write().expect("tree cache poisoned") = Some(Arc::clone(&tree));
        Ok(tree)
    }

    /// All entries strictly below `path_prefix` (or the whole tree), sorted by path.
    pub fn list_tree(&self, path_prefix: Option<&str>) -> Result<Vec<FileEntry>, RepoError> {
        let tree = self.full_tree()?;
        let prefix = match path_prefix {
            Some(p) => normalize_path(p)?,
            None => String::new(),
        };
        if prefix.is_empty() {
            return Ok(tree.as_ref().clone());
        }
        let dir = format!("{prefix}/");
        Ok(tree.iter().filter(|e| e.path.starts_with(&dir)).cloned().collect())
    }

    /// Paths whose file name is exactly `<class_name>.java`, sorted.
    pub fn find_class_path(&self, class_name: &str) -> Result<Vec<String>, RepoError> {
        validate_class_name(class_name)?;
        let file_name = format!("{class_name}.java");
        let tree = self.full_tree()?;
        Ok(tree
            .iter()
            .filter(|e| e.kind == EntryKind::File && file_name_of(&e.path) == file_name)
            .map(|e| e.path.clone())
            .collect())
    }

    pub fn fetch_file(&self, path: &str) -> Result<Arc<FileContent>, RepoError> {
        let path = normalize_path(path)?;
        if path.is_empty() {
            return Err(RepoError::FileNotFound(path));
        }
        if let Some(hit) = self.files.read().expect("file cache poisoned").get(&path) {
            return Ok(Arc::clone(hit));
        }
        let bytes = self.backend.read_file(&self.git_ref, &path)?;
        let content = Arc::new(FileContent::from_bytes(&path, bytes)?);
        self.files
            .write()
            .expect("file cache poisoned")
            .entry(path)
            .or_insert_with(|| Arc::clone(&content));
        Ok(content)
    }

    pub fn load_class_inventory(&self) -> Result<ClassInventory, RepoError> {
        let tree = self.full_tree()?;
        let mut entries: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for entry in tree.iter().filter(|e| e.kind == EntryKind::File) {
            if let Some(class) = file_name_of(&entry.path).strip_suffix(".java") {
                if !class.is_empty() {
                    entries.entry(class.to_string()).or_default().push(entry.path.clone());
                }
            }
        }
        // tree order is already lexicographic, so each path list is sorted
        Ok(ClassInventory {
            entries,
            snapshot_ref: self.git_ref.clone(),
            built_at: Utc::now(),
        })
    }
}

fn file_name_of(path: &str) -> &str {
    path.rsplit('/').next().unwrap_or(path)
}

fn validate_class_name(name: &str) -> Result<(), RepoError> {
    if name.is_empty() || name.contains(['/', '\\']) || name.chars().any(char::is_whitespace) {
        return Err(RepoError::InvalidClassName(name.to_string()));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_drops_dot_and_empty_segments() {
        assert_eq!(normalize_path("./src//pp/").unwrap(), "src/pp");
        assert_eq!(normalize_path("src\\pp\\Menu.java").unwrap(), "src/pp/Menu.java");
        assert_eq!(normalize_path("").unwrap(), "");
        assert!(matches!(normalize_path("src/../etc"), Err(RepoError::InvalidPath(_))));
    }

    #[test]
    fn class_names_with_separators_are_rejected() {
        assert!(validate_class_name("Menu").is_ok());
        assert!(validate_class_name("").is_err());
        assert!(validate_class_name("pp/Menu").is_err());
    }

    #[test]
    fn file_name_is_last_segment() {
        assert_eq!(file_name_of("a/b/Menu.java"), "Menu.java");
        assert_eq!(file_name_of("Menu.java"), "Menu.java");
    }
}
