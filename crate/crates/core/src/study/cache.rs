//! Content-addressed on-disk cache for derived artifacts.
//!
//! Each entry is a payload file `<kind>-<key>.json` and a metadata file
//! `<kind>-<key>.meta.json` holding the payload digest and creation time.
//! Keys are SHA-256 digests of the artifact kind, the algorithm version and
//! the canonical JSON of everything the artifact depends on.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

/// Bumped whenever an algorithm change alters cached payloads.
pub const ALGORITHM_VERSION: &str = "paramsens-derived-v1";

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Digest of `material` under `kind`.
pub fn cache_key(kind: &str, material: &impl Serialize) -> Result<String> {
    let mut h = Sha256::new();
    h.update(kind.as_bytes());
    h.update([0]);
    h.update(ALGORITHM_VERSION.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(material)?);
    Ok(hex::encode(h.finalize()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub kind: String,
    pub payload_sha256: String,
    pub created_unix: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CacheStatus {
    Hit,
    Computed,
    /// An entry existed but failed verification and was rebuilt.
    Recomputed,
}

#[derive(Debug, Clone)]
pub struct Cache {
    dir: PathBuf,
}

impl Cache {
    pub fn open(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Cache { dir: dir.to_path_buf() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn payload_path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.json"))
    }

    fn meta_path(&self, kind: &str, key: &str) -> PathBuf {
        self.dir.join(format!("{kind}-{key}.meta.json"))
    }

    /// Verified payload bytes, `Ok(None)` when absent, `Err` text when the
    /// entry is present but corrupt.
    fn load(&self, kind: &str, key: &str) -> std::result::Result<Option<Vec<u8>>, String> {
        let payload_path = self.payload_path(kind, key);
        let meta_path = self.meta_path(kind, key);
        if !payload_path.exists() && !meta_path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&payload_path).map_err(|e| format!("unreadable payload: {e}"))?;
        let meta: CacheEntry = fs::read(&meta_path)
            .map_err(|e| format!("unreadable metadata: {e}"))
            .and_then(|m| serde_json::from_slice(&m).map_err(|e| format!("bad metadata: {e}")))?;
        if meta.key != key || meta.kind != kind || meta.payload_sha256 != sha256_hex(&bytes) {
            return Err("payload digest mismatch".into());
        }
        Ok(Some(bytes))
    }

    fn store(&self, kind: &str, key: &str, bytes: &[u8]) -> Result<CacheEntry> {
        let entry = CacheEntry {
            key: key.into(),
            kind: kind.into(),
            payload_sha256: sha256_hex(bytes),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        };
        write_atomic(&self.payload_path(kind, key), bytes)?;
        write_atomic(&self.meta_path(kind, key), &serde_json::to_vec_pretty(&entry)?)?;
        Ok(entry)
    }

    /// Returns the cached value for `(kind, key)` or computes and stores
    /// it. A corrupt entry is logged and recomputed.
    pub fn get_or_compute<T, F>(&self, kind: &str, key: &str, compute: F) -> Result<(T, CacheStatus)>
    where
        T: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<T>,
    {
        let mut status = CacheStatus::Computed;
        match self.load(kind, key) {
            Ok(Some(bytes)) => match serde_json::from_slice(&bytes) {
                Ok(value) => return Ok((value, CacheStatus::Hit)),
                Err(e) => {
                    log::warn!("cache entry {kind}-{key} does not decode ({e}); recomputing");
                    status = CacheStatus::Recomputed;
                }
            },
            Ok(None) => {}
            Err(reason) => {
                log::warn!("cache entry {kind}-{key} is corrupt ({reason}); recomputing");
                status = CacheStatus::Recomputed;
            }
        }
        let value = compute()?;
        self.store(kind, key, &serde_json::to_vec(&value)?)?;
        Ok((value, status))
    }

    /// Metadata of a stored entry.
    pub fn entry(&self, kind: &str, key: &str) -> Option<CacheEntry> {
        let bytes = fs::read(self.meta_path(kind, key)).ok()?;
        serde_json::from_slice(&bytes).ok()
    }
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp{}",
        path.extension().and_then(|e| e.to_str()).unwrap_or(""),
        std::process::id()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
