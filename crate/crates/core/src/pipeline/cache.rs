//! Disk cache for expensive pipeline artifacts (trained networks,
//! adversarial datasets), keyed by a hash of the producing configuration.
//!
//! Every cache file embeds the exact key it was written under; a file whose
//! embedded key disagrees with the requested one is reported stale rather
//! than silently reused.

use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::{Error, Result};

/// Name of the environment variable selecting the cache directory.
pub const CACHE_DIR_ENV: &str = "TOPODETECT_CACHE_DIR";

#[derive(Debug, Clone, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    pub fn new(dir: Option<PathBuf>) -> Self {
        Self { dir }
    }

    /// Cache rooted at `$TOPODETECT_CACHE_DIR`, disabled when unset.
    pub fn from_env() -> Self {
        Self {
            dir: std::env::var_os(CACHE_DIR_ENV).map(PathBuf::from),
        }
    }

    pub fn enabled(&self) -> bool {
        self.dir.is_some()
    }

    fn path_for(&self, kind: &str, key: &str) -> Option<PathBuf> {
        let dir = self.dir.as_ref()?;
        let digest = Sha256::digest(key.as_bytes());
        let hex: String = digest.iter().take(16).map(|b| format!("{:02x}", b)).collect();
        Some(dir.join(format!("{}-{}.bin", kind, hex)))
    }

    /// Fetch a payload; `None` on miss or when disabled. A present file whose
    /// embedded key differs from `key` is a stale-cache error.
    pub fn get(&self, kind: &str, key: &str) -> Result<Option<Vec<u8>>> {
        let Some(path) = self.path_for(kind, key) else {
            return Ok(None);
        };
        if !path.exists() {
            return Ok(None);
        }
        let bytes = fs::read(&path)?;
        let (stored_key, payload) = split_entry(&bytes, &path)?;
        if stored_key != key {
            return Err(Error::StaleCache {
                path: path.display().to_string(),
                detail: "embedded key does not match the requested configuration".into(),
            });
        }
        Ok(Some(payload.to_vec()))
    }

    pub fn put(&self, kind: &str, key: &str, payload: &[u8]) -> Result<()> {
        let Some(path) = self.path_for(kind, key) else {
            return Ok(());
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let mut bytes = Vec::with_capacity(8 + key.len() + payload.len());
        bytes.extend_from_slice(&(key.len() as u64).to_le_bytes());
        bytes.extend_from_slice(key.as_bytes());
        bytes.extend_from_slice(payload);
        fs::write(&path, bytes)?;
        Ok(())
    }
}

fn split_entry<'a>(bytes: &'a [u8], path: &Path) -> Result<(&'a str, &'a [u8])> {
    let err = |msg: &str| Error::StaleCache {
        path: path.display().to_string(),
        detail: msg.into(),
    };
    if bytes.len() < 8 {
        return Err(err("entry shorter than its header"));
    }
    let key_len = u64::from_le_bytes(bytes[..8].try_into().unwrap()) as usize;
    if bytes.len() < 8 + key_len {
        return Err(err("entry truncated"));
    }
    let key = std::str::from_utf8(&bytes[8..8 + key_len])
        .map_err(|_| err("embedded key is not utf-8"))?;
    Ok((key, &bytes[8 + key_len..]))
}
