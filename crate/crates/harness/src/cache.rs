//! Content-addressed artifact store. Each entry is a directory named by the
//! hash of its key; entries are built in a scratch directory and renamed into
//! place, so readers never see a partial artifact.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use anyhow::{Context, Result};
use sha2::{Digest, Sha256};

/// Hex SHA-256 over length-prefixed parts.
pub fn content_key(parts: &[&str]) -> String {
    let mut h = Sha256::new();
    for p in parts {
        h.update((p.len() as u64).to_le_bytes());
        h.update(p.as_bytes());
    }
    hex::encode(h.finalize())
}

static SCRATCH: AtomicU64 = AtomicU64::new(0);

#[derive(Debug)]
pub struct ArtifactCache {
    root: PathBuf,
    locks: Mutex<HashMap<PathBuf, Arc<Mutex<()>>>>,
}

impl ArtifactCache {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(&root).with_context(|| format!("creating cache {}", root.display()))?;
        Ok(Self {
            root,
            locks: Mutex::new(HashMap::new()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Directory of the entry `kind/key`.
    pub fn entry(&self, kind: &str, key: &str) -> PathBuf {
        self.root.join(kind).join(key)
    }

    pub fn contains(&self, kind: &str, key: &str) -> bool {
        self.entry(kind, key).is_dir()
    }

    fn lock_for(&self, dir: &Path) -> Arc<Mutex<()>> {
        let mut map = self.locks.lock().expect("cache lock map");
        map.entry(dir.to_path_buf()).or_default().clone()
    }

    /// Returns the entry directory, running `build` into a scratch directory
    /// first if the entry does not exist yet. The flag is true on a hit.
    /// Concurrent callers asking for the same key build it once.
    pub fn get_or_build(
        &self,
        kind: &str,
        key: &str,
        build: impl FnOnce(&Path) -> Result<()>,
    ) -> Result<(PathBuf, bool)> {
        let dir = self.entry(kind, key);
        if dir.is_dir() {
            return Ok((dir, true));
        }
        let lock = self.lock_for(&dir);
        let _guard = lock.lock().expect("cache entry lock");
        if dir.is_dir() {
            return Ok((dir, true));
        }
        let parent = self.root.join(kind);
        fs::create_dir_all(&parent)?;
        let scratch = parent.join(format!(
            ".tmp-{key}-{}-{}",
            std::process::id(),
            SCRATCH.fetch_add(1, Ordering::Relaxed)
        ));
        fs::create_dir_all(&scratch)?;
        match build(&scratch) {
            Ok(()) => {
                if let Err(e) = fs::rename(&scratch, &dir) {
                    // another process may have won the race
                    let _ = fs::remove_dir_all(&scratch);
                    if !dir.is_dir() {
                        return Err(e).with_context(|| format!("publishing {}", dir.display()));
                    }
                }
                Ok((dir, false))
            }
            Err(e) => {
                let _ = fs::remove_dir_all(&scratch);
                Err(e)
            }
        }
    }
}

/// Writes `bytes` to `path` through a sibling temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(format!(
        "tmp-{}-{}",
        std::process::id(),
        SCRATCH.fetch_add(1, Ordering::Relaxed)
    ));
    fs::write(&tmp, bytes).with_context(|| format!("writing {}", tmp.display()))?;
    fs::rename(&tmp, path).with_context(|| format!("renaming into {}", path.display()))
}
