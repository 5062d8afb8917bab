use std::path::{Path, PathBuf};

use walkdir::WalkDir;

use super::{normalize_path, EntryKind, FileEntry, Provider, RepoBackend, RepoError};

/// Serves a plain directory. `.git` is never listed.
#[derive(Debug, Clone)]
pub struct LocalDirBackend {
    root: PathBuf,
}

impl LocalDirBackend {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }
}

impl RepoBackend for LocalDirBackend {
    fn provider(&self) -> Provider {
        Provider::LocalDir
    }

    fn list_all(&self, _git_ref: &str) -> Result<Vec<FileEntry>, RepoError> {
        if !self.root.is_dir() {
            return Err(RepoError::ProviderUnavailable(format!(
                "{} is not a directory",
                self.root.display()
            )));
        }
        let mut entries = Vec::new();
        let walker = WalkDir::new(&self.root)
            .min_depth(1)
            .into_iter()
            .filter_entry(|e| e.file_name() != ".git");
        for item in walker {
            let item = item.map_err(|e| RepoError::ProviderUnavailable(e.to_string()))?;
            let rel = item
                .path()
                .strip_prefix(&self.root)
                .expect("walkdir yields paths below the root");
            let path = normalize_path(&rel.to_string_lossy())?;
            let file_type = item.file_type();
            if file_type.is_dir() {
                entries.push(FileEntry {
                    path,
                    kind: EntryKind::Directory,
                    size_bytes: None,
                });
            } else if file_type.is_file() {
                let size = item
                    .metadata()
                    .map_err(|e| RepoError::ProviderUnavailable(e.to_string()))?
                    .len();
                entries.push(FileEntry {
                    path,
                    kind: EntryKind::File,
                    size_bytes: Some(size),
                });
            }
        }
        Ok(entries)
    }

    fn read_file(&self, _git_ref: &str, path: &str) -> Result<Vec<u8>, RepoError> {
        let full = self.root.join(path);
        if !full.is_file() {
            return Err(RepoError::FileNotFound(path.to_string()));
        }
        std::fs::read(&full).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => RepoError::FileNotFound(path.to_string()),
            _ => RepoError::ProviderUnavailable(e.to_string()),
        })
    }
}
