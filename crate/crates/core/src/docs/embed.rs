use std::hash::Hasher;

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::http::{HttpClient, TraceDirection};
use crate::protocol::{EmbeddingsRequest, EmbeddingsResponse};

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("cannot embed empty text")]
    EmptyInput,
    #[error("embedding backend error: {0}")]
    Backend(String),
}

/// A unit-length embedding. Construction normalizes; all entries are finite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EmbeddingVector(Vec<f32>);

impl EmbeddingVector {
    /// Normalizes `values` to unit L2 norm. Fails on zero or non-finite input.
    pub fn normalized(values: Vec<f64>) -> Result<Self, EmbedError> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbedError::Backend("embedding contains non-finite values".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(EmbedError::EmptyInput);
        }
        Ok(Self(values.into_iter().map(|v| (v / norm) as f32).collect()))
    }

    /// Wraps stored values without renormalizing (used when loading an index).
    pub(crate) fn from_stored(values: Vec<f32>) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f32] {
        &self.0
    }

    pub fn dimension(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|&v| f64::from(v) * f64::from(v)).sum::<f64>().sqrt()
    }
}

pub trait Embedder: Send + Sync {
    /// Stable identifier written into persisted indexes.
    fn id(&self) -> String;
    fn dimension(&self) -> usize;
    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError>;
}

pub const HASH_BUCKETS: usize = 256;

/// Bucket of one token: FNV-1a 64 of the lowercased token, modulo 256.
pub fn token_bucket(token: &str) -> usize {
    let mut hasher = FnvHasher::default();
    hasher.write(token.to_lowercase().as_bytes());
    (hasher.finish() % HASH_BUCKETS as u64) as usize
}

/// Deterministic bag-of-tokens embedder used when no model is available.
#[derive(Debug, Clone, Copy, Default)]
pub struct HashEmbedder;

impl HashEmbedder {
    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector, EmbedError> {
        let mut counts = vec![0.0f64; HASH_BUCKETS];
        for token in text.split_whitespace() {
            counts[token_bucket(token)] += 1.0;
        }
        EmbeddingVector::normalized(counts)
    }
}

impl Embedder for HashEmbedder {
    fn id(&self) -> String {
        "fnv1a64-mod256".to_string()
    }

    fn dimension(&self) -> usize {
        HASH_BUCKETS
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Client for an OpenAI-compatible `POST /v1/embeddings` endpoint.
#[derive(Debug, Clone)]
pub struct RemoteEmbedder {
    base_url: String,
    model: String,
    dimension: usize,
    http: HttpClient,
}

impl RemoteEmbedder {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>, dimension: usize) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            model: model.into(),
            dimension,
            http: HttpClient::new(TraceDirection::ToModel),
        }
    }
}

impl Embedder for RemoteEmbedder {
    fn id(&self) -> String {
        format!("remote:{}:{}", self.model, self.dimension)
    }

    fn dimension(&self) -> usize {
        self.dimension
    }

    fn embed(&self, texts: &[&str]) -> Result<Vec<EmbeddingVector>, EmbedError> {
        if texts.iter().any(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyInput);
        }
        let request = EmbeddingsRequest {
            model: self.model.clone(),
            input: texts.iter().map(|t| t.to_string()).collect(),
        };
        let body = serde_json::to_vec(&request).map_err(|e| EmbedError::Backend(e.to_string()))?;
        let response = self
            .http
            .post_json(&format!("{}/v1/embeddings", self.base_url), &body)
            .map_err(|e| EmbedError::Backend(e.to_string()))?;
        if !response.is_success() {
            return Err(EmbedError::Backend(format!(
                "HTTP {}: {}",
                response.status,
                response.text_lossy()
            )));
        }
        let mut parsed: EmbeddingsResponse =
            serde_json::from_slice(&response.body).map_err(|e| EmbedError::Backend(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::Backend(format!(
                "expected {} embeddings, got {}",
                texts.len(),
                parsed.data.len()
            )));
        }
        parsed.data.sort_by_key(|d| d.index);
        parsed
            .data
            .into_iter()
            .map(|d| {
                if d.embedding.len() != self.dimension {
                    return Err(EmbedError::Backend(format!(
                        "expected dimension {}, got {}",
                        self.dimension,
                        d.embedding.len()
                    )));
                }
                EmbeddingVector::normalized(d.embedding.into_iter().map(f64::from).collect())
            })
            .collect()
    }
}
