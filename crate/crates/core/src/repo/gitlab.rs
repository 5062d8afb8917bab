//! GitLab v4 read endpoints: repository tree and repository files.

use base64::Engine as _;
use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::Deserialize;

use super::{normalize_path, EntryKind, FileEntry, Provider, RepoBackend, RepoError};
use crate::http::{HttpClient, HttpResponse, TraceDirection};

/// Environment variable holding the `PRIVATE-TOKEN` value.
pub const TOKEN_ENV_VAR: &str = "ASSIST_GITLAB_TOKEN";

const PER_PAGE: usize = 100;
const MAX_PAGES: usize = 10_000;

// RFC 3986 unreserved characters stay as-is; `/` in file paths becomes %2F.
const COMPONENT: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

fn encode(s: &str) -> String {
    utf8_percent_encode(s, COMPONENT).to_string()
}

#[derive(Debug, Clone)]
pub struct GitLabBackend {
    base_url: String,
    project_id: String,
    http: HttpClient,
}

#[derive(Debug, Deserialize)]
struct TreeItem {
    path: String,
    #[serde(rename = "type")]
    kind: String,
}

#[derive(Debug, Deserialize)]
struct FilePayload {
    content: String,
    encoding: String,
}

impl GitLabBackend {
    /// `base_url` is the API root, e.g. `https://gitlab.example.org/api/v4`.
    pub fn new(base_url: impl Into<String>, project_id: impl Into<String>, token: Option<String>) -> Self {
        let mut http = HttpClient::new(TraceDirection::ToProvider);
        if let Some(token) = token {
            http = http.with_header("PRIVATE-TOKEN", token);
        }
        Self::with_client(base_url, project_id, http)
    }

    /// Reads the token from [`TOKEN_ENV_VAR`] when it is set.
    pub fn from_env(base_url: impl Into<String>, project_id: impl Into<String>) -> Self {
        Self::new(base_url, project_id, std::env::var(TOKEN_ENV_VAR).ok())
    }

    pub fn with_client(base_url: impl Into<String>, project_id: impl Into<String>, http: HttpClient) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            project_id: project_id.into(),
            http,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base_url
    }

    pub fn project_id(&self) -> &str {
        &self.project_id
    }

    fn project_url(&self) -> String {
        format!("{}/projects/{}", self.base_url, encode(&self.project_id))
    }

    fn get(&self, url: &str) -> Result<HttpResponse, RepoError> {
        self.http
            .get(url)
            .map_err(|e| RepoError::ProviderUnavailable(e.to_string()))
    }
}

impl RepoBackend for GitLabBackend {
    fn provider(&self) -> Provider {
        Provider::RemoteApi
    }

    fn list_all(&self, git_ref: &str) -> Result<Vec<FileEntry>, RepoError> {
        let mut entries = Vec::new();
        let mut page = 1usize;
        for _ in 0..MAX_PAGES {
            let url = format!(
                "{}/repository/tree?ref={}&recursive=true&per_page={PER_PAGE}&page={page}",
                self.project_url(),
                encode(git_ref)
            );
            let response = self.get(&url)?;
            match response.status {
                200..=299 => {}
                404 => return Err(RepoError::RefNotFound(git_ref.to_string())),
                status => {
                    return Err(RepoError::ProviderUnavailable(format!(
                        "tree listing returned HTTP {status}"
                    )))
                }
            }
            let items: Vec<TreeItem> = serde_json::from_slice(&response.body)
                .map_err(|e| RepoError::ProviderUnavailable(format!("malformed tree page: {e}")))?;
            let count = items.len();
            for item in items {
                let kind = match item.kind.as_str() {
                    "blob" => EntryKind::File,
                    "tree" => EntryKind::Directory,
                    // submodules are out of scope
                    _ => continue,
                };
                entries.push(FileEntry {
                    path: normalize_path(&item.path)?,
                    kind,
                    size_bytes: None,
                });
            }
            let next = response
                .header("x-next-page")
                .map(str::trim)
                .filter(|v| !v.is_empty())
                .and_then(|v| v.parse::<usize>().ok());
            match next {
                Some(n) if n > page => page = n,
                Some(_) => break,
                None if response.header("x-next-page").is_some() => break,
                None if count < PER_PAGE => break,
                None => page += 1,
            }
        }
        Ok(entries)
    }

    fn read_file(&self, git_ref: &str, path: &str) -> Result<Vec<u8>, RepoError> {
        let url = format!(
            "{}/repository/files/{}?ref={}",
            self.project_url(),
            encode(path),
            encode(git_ref)
        );
        let response = self.get(&url)?;
        match response.status {
            200..=299 => {}
            404 => return Err(RepoError::FileNotFound(path.to_string())),
            status => {
                return Err(RepoError::ProviderUnavailable(format!(
                    "file request returned HTTP {status}"
                )))
            }
        }
        let payload: FilePayload = serde_json::from_slice(&response.body).map_err(|e| RepoError::DecodeError {
            path: path.to_string(),
            reason: format!("malformed file payload: {e}"),
        })?;
        if payload.encoding != "base64" {
            return Err(RepoError::DecodeError {
                path: path.to_string(),
                reason: format!("unsupported encoding `{}`", payload.encoding),
            });
        }
        let compact: String = payload.content.chars().filter(|c| !c.is_ascii_whitespace()).collect();
        base64::engine::general_purpose::STANDARD
            .decode(compact.as_bytes())
            .map_err(|e| RepoError::DecodeError {
                path: path.to_string(),
                reason: format!("invalid base64: {e}"),
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_paths_are_fully_encoded() {
        assert_eq!(encode("src/pp/Menu.java"), "src%2Fpp%2FMenu.java");
        assert_eq!(encode("group/project"), "group%2Fproject");
        assert_eq!(encode("main"), "main");
    }
}
