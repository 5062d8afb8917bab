//! Document-level grounding: chunk project documentation, embed it, and
//! answer exact top-k cosine queries.

mod chunk;
mod embed;
mod store;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use chunk::{split_chunks, ChunkSpan, ChunkingConfig};
pub use embed::{token_bucket, EmbedError, Embedder, EmbeddingVector, HashEmbedder, RemoteEmbedder, HASH_BUCKETS};
pub use store::FORMAT_VERSION;

/// Default number of passages retrieved per prompt.
pub const DEFAULT_TOP_K: usize = 4;

#[derive(Debug, Error)]
pub enum DocIndexError {
    #[error("document `{0}` is empty")]
    EmptyDocument(String),
    #[error("index is empty")]
    EmptyIndex,
    #[error("k must be at least 1")]
    InvalidK,
    #[error("embedding failed: {0}")]
    EmbeddingBackend(#[from] EmbedError),
    #[error("embedding has dimension {got}, index expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("chunk `{0}` is already indexed")]
    DuplicateChunk(String),
    #[error("index was built with embedder `{stored}`, but `{given}` was supplied")]
    EmbedderMismatch { stored: String, given: String },
    #[error("index file has format version {found}, expected {expected}")]
    FormatVersionMismatch { found: u32, expected: u32 },
    #[error("malformed index file: {0}")]
    Malformed(String),
    #[error("index I/O failed for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocChunk {
    /// First 16 hex digits of SHA-256(source, NUL, text), then `-` and the ordinal.
    pub chunk_id: String,
    pub source: String,
    pub ordinal: usize,
    pub text: String,
    pub embedding: EmbeddingVector,
}

pub fn chunk_id(source: &str, ordinal: usize, text: &str) -> String {
    let mut hasher = Sha256::new();
    hasher.update(source.as_bytes());
    hasher.update([0u8]);
    hasher.update(text.as_bytes());
    let digest = hex::encode(hasher.finalize());
    format!("{}-{ordinal:04}", &digest[..16])
}

#[derive(Debug, Clone)]
pub struct ScoredChunk {
    pub chunk: Arc<DocChunk>,
    /// Cosine similarity in [-1, 1].
    pub score: f64,
}

/// Result order: score descending, then chunk id ascending.
pub fn rank_order(a: &ScoredChunk, b: &ScoredChunk) -> Ordering {
    b.score
        .partial_cmp(&a.score)
        .unwrap_or(Ordering::Equal)
        .then_with(|| a.chunk.chunk_id.cmp(&b.chunk.chunk_id))
}

pub struct DocIndex {
    embedder: Arc<dyn Embedder>,
    chunking: ChunkingConfig,
    chunks: Vec<Arc<DocChunk>>,
    norms: Vec<f64>,
    ids: HashSet<String>,
}

impl fmt::Debug for DocIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DocIndex")
            .field("embedder", &self.embedder.id())
            .field("dimension", &self.embedder.dimension())
            .field("chunks", &self.chunks.len())
            .finish()
    }
}

impl DocIndex {
    pub fn new(embedder: Arc<dyn Embedder>) -> Self {
        Self::with_chunking(embedder, ChunkingConfig::default())
    }

    pub fn with_chunking(embedder: Arc<dyn Embedder>, chunking: ChunkingConfig) -> Self {
        Self {
            embedder,
            chunking,
            chunks: Vec::new(),
            norms: Vec::new(),
            ids: HashSet::new(),
        }
    }

    /// An empty index over the fallback hash embedder.
    pub fn fallback() -> Self {
        Self::new(Arc::new(HashEmbedder))
    }

    pub fn len(&self) -> usize {
        self.chunks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.chunks.is_empty()
    }

    pub fn dimension(&self) -> usize {
        self.embedder.dimension()
    }

    pub fn embedder_id(&self) -> String {
        self.embedder.id()
    }

    pub fn chunking(&self) -> ChunkingConfig {
        self.chunking
    }

    pub fn chunks(&self) -> &[Arc<DocChunk>] {
        &self.chunks
    }

    pub fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, DocIndexError> {
        let vectors = self.embedder.embed(texts)?;
        for v in &vectors {
            if v.dimension() != self.dimension() {
                return Err(DocIndexError::DimensionMismatch {
                    expected: self.dimension(),
                    got: v.dimension(),
                });
            }
        }
        Ok(vectors)
    }

    /// Chunks and embeds one document and adds its chunks to the index.
    pub fn ingest_document(&mut self, path: &str, text: &str) -> Result<Vec<Arc<DocChunk>>, DocIndexError> {
        if text.trim().is_empty() {
            return Err(DocIndexError::EmptyDocument(path.to_string()));
        }
        let spans = split_chunks(text, self.chunking);
        let texts: Vec<&str> = spans.iter().map(|s| s.text.as_str()).collect();
        let vectors = self.embed(&texts)?;
        let mut added = Vec::with_capacity(spans.len());
        for (ordinal, (span, embedding)) in spans.into_iter().zip(vectors).enumerate() {
            let chunk = DocChunk {
                chunk_id: chunk_id(path, ordinal, &span.text),
                source: path.to_string(),
                ordinal,
                text: span.text,
                embedding,
            };
            added.push(chunk);
        }
        for chunk in &added {
            if self.ids.contains(&chunk.chunk_id) {
                return Err(DocIndexError::DuplicateChunk(chunk.chunk_id.clone()));
            }
        }
        Ok(added.into_iter().map(|c| self.push(c)).collect())
    }

    /// Ingests every `.md`, `.markdown` and `.txt` file below `dir`, in path order.
    pub fn ingest_dir(&mut self, dir: &Path) -> Result<usize, DocIndexError> {
        let mut files: Vec<_> = walkdir::WalkDir::new(dir)
            .into_iter()
            .filter_map(Result::ok)
            .filter(|e| e.file_type().is_file())
            .filter(|e| {
                matches!(
                    e.path().extension().and_then(|x| x.to_str()),
                    Some("md" | "markdown" | "txt")
                )
            })
            .map(|e| e.into_path())
            .collect();
        files.sort();
        let mut total = 0;
        for file in files {
            let text = std::fs::read_to_string(&file).map_err(|source| DocIndexError::Io {
                path: file.display().to_string(),
                source,
            })?;
            if text.trim().is_empty() {
                continue;
            }
            let rel = file.strip_prefix(dir).unwrap_or(&file);
            let name = rel.to_string_lossy().replace('\\', "/");
            total += self.ingest_document(&name, &text)?.len();
        }
        Ok(total)
    }

    fn push(&mut self, chunk: DocChunk) -> Arc<DocChunk> {
        let chunk = Arc::new(chunk);
        self.ids.insert(chunk.chunk_id.clone());
        self.norms.push(chunk.embedding.norm());
        self.chunks.push(Arc::clone(&chunk));
        chunk
    }

    /// Exact top-k by cosine similarity.
    pub fn query(&self, text: &str, k: usize) -> Result<Vec<ScoredChunk>, DocIndexError> {
        if k == 0 {
            return Err(DocIndexError::InvalidK);
        }
        if self.chunks.is_empty() {
            return Err(DocIndexError::EmptyIndex);
        }
        let query = self.embed(&[text])?.pop().expect("one vector per input");
        Ok(self.query_vector(&query, k))
    }

    pub fn query_vector(&self, query: &EmbeddingVector, k: usize) -> Vec<ScoredChunk> {
        let query_norm = query.norm();
        let mut scored: Vec<ScoredChunk> = self
            .chunks
            .iter()
            .zip(&self.norms)
            .map(|(chunk, &norm)| ScoredChunk {
                chunk: Arc::clone(chunk),
                score: cosine(query.values(), chunk.embedding.values(), query_norm, norm),
            })
            .collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k - 1, rank_order);
            scored.truncate(k);
        }
        scored.sort_by(rank_order);
        scored
    }
}

fn cosine(a: &[f32], b: &[f32], norm_a: f64, norm_b: f64) -> f64 {
    if norm_a == 0.0 || norm_b == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| f64::from(x) * f64::from(y)).sum();
    (dot / (norm_a * norm_b)).clamp(-1.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn index_of(texts: &[&str]) -> DocIndex {
        let mut index = DocIndex::fallback();
        for (i, t) in texts.iter().enumerate() {
            index.ingest_document(&format!("doc{i}.md"), t).unwrap();
        }
        index
    }

    #[test]
    fn self_query_scores_one() {
        let index = index_of(&["ship models for length four", "background music state", "menu checkbox"]);
        let hits = index.query("background music state", 2).unwrap();
        assert_eq!(hits[0].chunk.text, "background music state");
        assert!((hits[0].score - 1.0).abs() < 1e-6);
    }

    #[test]
    fn k_beyond_size_returns_everything_sorted() {
        let index = index_of(&["a b", "b c", "c d"]);
        let hits = index.query("b", 10).unwrap();
        assert_eq!(hits.len(), 3);
        for pair in hits.windows(2) {
            assert_ne!(rank_order(&pair[0], &pair[1]), Ordering::Greater);
        }
    }

    #[test]
    fn empty_index_and_zero_k_are_errors() {
        let index = DocIndex::fallback();
        assert!(matches!(index.query("x", 1), Err(DocIndexError::EmptyIndex)));
        let index = index_of(&["x"]);
        assert!(matches!(index.query("x", 0), Err(DocIndexError::InvalidK)));
    }

    #[test]
    fn empty_document_is_rejected() {
        let mut index = DocIndex::fallback();
        assert!(matches!(
            index.ingest_document("a.md", ""),
            Err(DocIndexError::EmptyDocument(_))
        ));
    }

    #[test]
    fn duplicate_ingest_is_rejected() {
        let mut index = index_of(&["same text"]);
        let err = index.ingest_document("doc0.md", "same text").unwrap_err();
        assert!(matches!(err, DocIndexError::DuplicateChunk(_)));
        assert_eq!(index.len(), 1);
    }

    #[test]
    fn chunk_ids_carry_ordinal() {
        let id = chunk_id("a.md", 3, "text");
        assert!(id.ends_with("-0003"));
        assert_eq!(id.len(), 16 + 5);
        assert_ne!(chunk_id("b.md", 3, "text"), id);
    }
}
