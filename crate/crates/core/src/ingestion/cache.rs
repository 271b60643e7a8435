use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::ContentHash;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("cache key has an empty {0}")]
    InvalidKey(&'static str),
    #[error("cache storage failure at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CacheKey {
    pub content_hash: ContentHash,
    pub artifact_kind: String,
    pub backend_id: String,
}

impl CacheKey {
    pub fn new(
        content_hash: ContentHash,
        artifact_kind: impl Into<String>,
        backend_id: impl Into<String>,
    ) -> Self {
        CacheKey {
            content_hash,
            artifact_kind: artifact_kind.into(),
            backend_id: backend_id.into(),
        }
    }

    /// `hex(content_hash)-kind-backend`, with `-` and anything outside
    /// `[A-Za-z0-9._]` percent-encoded in the last two parts so the three
    /// fields never run together.
    pub fn file_name(&self) -> Result<String, CacheError> {
        if self.artifact_kind.is_empty() {
            return Err(CacheError::InvalidKey("artifact kind"));
        }
        if self.backend_id.is_empty() {
            return Err(CacheError::InvalidKey("backend id"));
        }
        Ok(format!(
            "{}-{}-{}",
            self.content_hash.to_hex(),
            encode_component(&self.artifact_kind),
            encode_component(&self.backend_id)
        ))
    }
}

fn encode_component(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        if b.is_ascii_alphanumeric() || b == b'.' || b == b'_' {
            out.push(b as char);
        } else {
            let _ = write!(out, "%{b:02X}");
        }
    }
    out
}

/// One file per artifact, keyed by frame pixels, artifact kind and backend.
#[derive(Debug, Clone)]
pub struct ArtifactCache {
    dir: PathBuf,
}

impl ArtifactCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, CacheError> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|source| CacheError::Io {
            path: dir.clone(),
            source,
        })?;
        Ok(ArtifactCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path_for(&self, key: &CacheKey) -> Result<PathBuf, CacheError> {
        Ok(self.dir.join(key.file_name()?))
    }

    /// `Ok(None)` when nothing is stored under `key`.
    pub fn get(&self, key: &CacheKey) -> Result<Option<Vec<u8>>, CacheError> {
        let path = self.path_for(key)?;
        match fs::read(&path) {
            Ok(bytes) => Ok(Some(bytes)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(source) => Err(CacheError::Io { path, source }),
        }
    }

    /// Writes through a temp file and rename, so concurrent writers of the
    /// same key leave one complete payload behind.
    pub fn put(&self, key: &CacheKey, payload: &[u8]) -> Result<(), CacheError> {
        let path = self.path_for(key)?;
        let io_err = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        let mut tmp = tempfile::NamedTempFile::new_in(&self.dir).map_err(io_err)?;
        tmp.write_all(payload).map_err(io_err)?;
        tmp.persist(&path).map_err(|e| io_err(e.error))?;
        Ok(())
    }

    pub fn get_or_try_insert<E>(
        &self,
        key: &CacheKey,
        compute: impl FnOnce() -> Result<Vec<u8>, E>,
    ) -> Result<Vec<u8>, E>
    where
        E: From<CacheError>,
    {
        if let Some(hit) = self.get(key)? {
            return Ok(hit);
        }
        let payload = compute()?;
        self.put(key, &payload)?;
        Ok(payload)
    }
}
