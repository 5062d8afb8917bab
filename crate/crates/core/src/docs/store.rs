//! Index file layout (all integers little-endian):
//!
//! ```text
//! magic         8 bytes  "ASSISTIX"
//! header_len    u32
//! header        JSON {"format_version":1,"dimension":D,"embedder_id":"...",
//!                     "chunk_count":N,"max_chars":M,"overlap":O}
//! N records:
//!   meta_len    u32
//!   meta        JSON {"chunk_id":"...","source":"...","ordinal":i,"text":"..."}
//!   vector      D x f32
//! ```

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{ChunkingConfig, DocChunk, DocIndex, DocIndexError, Embedder, EmbeddingVector};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"ASSISTIX";

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dimension: usize,
    embedder_id: String,
    chunk_count: usize,
    max_chars: usize,
    overlap: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct ChunkMeta {
    chunk_id: String,
    source: String,
    ordinal: usize,
    text: String,
}

fn io_err(path: &Path, source: std::io::Error) -> DocIndexError {
    DocIndexError::Io {
        path: path.display().to_string(),
        source,
    }
}

impl DocIndex {
    pub fn save(&self, path: &Path) -> Result<(), DocIndexError> {
        let file = fs::File::create(path).map_err(|e| io_err(path, e))?;
        let mut out = BufWriter::new(file);
        let header = Header {
            format_version: FORMAT_VERSION,
            dimension: self.dimension(),
            embedder_id: self.embedder_id(),
            chunk_count: self.chunks.len(),
            max_chars: self.chunking.max_chars,
            overlap: self.chunking.overlap,
        };
        let mut write = |bytes: &[u8]| out.write_all(bytes).map_err(|e| io_err(path, e));
        let header = serde_json::to_vec(&header).expect("header serializes");
        write(MAGIC)?;
        write(&(header.len() as u32).to_le_bytes())?;
        write(&header)?;
        for chunk in &self.chunks {
            let meta = serde_json::to_vec(&ChunkMeta {
                chunk_id: chunk.chunk_id.clone(),
                source: chunk.source.clone(),
                ordinal: chunk.ordinal,
                text: chunk.text.clone(),
            })
            .expect("chunk metadata serializes");
            write(&(meta.len() as u32).to_le_bytes())?;
            write(&meta)?;
            let mut raw = Vec::with_capacity(chunk.embedding.dimension() * 4);
            for v in chunk.embedding.values() {
                raw.extend_from_slice(&v.to_le_bytes());
            }
            write(&raw)?;
        }
        out.flush().map_err(|e| io_err(path, e))
    }

    /// Loads an index written by [`DocIndex::save`]. The embedder must be the
    /// one the index was built with, since queries are embedded with it.
    pub fn load(path: &Path, embedder: Arc<dyn Embedder>) -> Result<DocIndex, DocIndexError> {
        let bytes = fs::read(path).map_err(|e| io_err(path, e))?;
        let mut reader = Reader { bytes: &bytes, pos: 0 };
        if reader.take(MAGIC.len())? != MAGIC {
            return Err(DocIndexError::Malformed("missing magic bytes".into()));
        }
        let header_len = reader.u32()? as usize;
        let header_value: serde_json::Value = serde_json::from_slice(reader.take(header_len)?)
            .map_err(|e| DocIndexError::Malformed(format!("header: {e}")))?;
        let found = header_value
            .get("format_version")
            .and_then(serde_json::Value::as_u64)
            .ok_or_else(|| DocIndexError::Malformed("header lacks format_version".into()))?;
        if found != u64::from(FORMAT_VERSION) {
            return Err(DocIndexError::FormatVersionMismatch {
                found: found as u32,
                expected: FORMAT_VERSION,
            });
        }
        let header: Header =
            serde_json::from_value(header_value).map_err(|e| DocIndexError::Malformed(format!("header: {e}")))?;
        if header.embedder_id != embedder.id() {
            return Err(DocIndexError::EmbedderMismatch {
                stored: header.embedder_id,
                given: embedder.id(),
            });
        }
        if header.dimension != embedder.dimension() {
            return Err(DocIndexError::DimensionMismatch {
                expected: embedder.dimension(),
                got: header.dimension,
            });
        }
        let chunking = ChunkingConfig {
            max_chars: header.max_chars,
            overlap: header.overlap,
        };
        let mut index = DocIndex::with_chunking(embedder, chunking);
        for _ in 0..header.chunk_count {
            let meta_len = reader.u32()? as usize;
            let meta: ChunkMeta = serde_json::from_slice(reader.take(meta_len)?)
                .map_err(|e| DocIndexError::Malformed(format!("chunk record: {e}")))?;
            let raw = reader.take(header.dimension * 4)?;
            let values = raw
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
                .collect();
            if index.ids.contains(&meta.chunk_id) {
                return Err(DocIndexError::DuplicateChunk(meta.chunk_id));
            }
            index.push(DocChunk {
                chunk_id: meta.chunk_id,
                source: meta.source,
                ordinal: meta.ordinal,
                text: meta.text,
                embedding: EmbeddingVector::from_stored(values),
            });
        }
        if reader.pos != bytes.len() {
            return Err(DocIndexError::Malformed("trailing bytes after last chunk".into()));
        }
        Ok(index)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], DocIndexError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| DocIndexError::Malformed("unexpected end of file".into()))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, DocIndexError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::docs::HashEmbedder;

    #[test]
    fn bumped_version_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let mut index = DocIndex::fallback();
        index.ingest_document("a.md", "alpha beta").unwrap();
        index.save(&path).unwrap();

        let mut bytes = fs::read(&path).unwrap();
        let text = String::from_utf8_lossy(&bytes).into_owned();
        let at = text.find("\"format_version\":1").unwrap() + "\"format_version\":".len();
        bytes[at] = b'2';
        fs::write(&path, &bytes).unwrap();

        let err = DocIndex::load(&path, Arc::new(HashEmbedder)).unwrap_err();
        assert!(matches!(
            err,
            DocIndexError::FormatVersionMismatch { found: 2, expected: 1 }
        ));
    }

    #[test]
    fn truncated_file_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("index.bin");
        let mut index = DocIndex::fallback();
        index.ingest_document("a.md", "alpha beta").unwrap();
        index.save(&path).unwrap();
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(
            DocIndex::load(&path, Arc::new(HashEmbedder)),
            Err(DocIndexError::Malformed(_))
        ));
    }

    #[test]
    fn unwritable_path_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("missing-dir").join("index.bin");
        let err = DocIndex::fallback().save(&path).unwrap_err();
        assert!(matches!(err, DocIndexError::Io { .. }));
    }
}
