use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendReply, ChatRequest};

/// What is stored per request hash on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub backend_id: String,
    pub request: ChatRequest,
    pub response: BackendReply,
}

/// Content-addressed response store. Reads take a shared lock; writes are
/// serialized and land on disk through a temp file and rename, so a crash
/// never leaves a truncated entry behind.
#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    memory: RwLock<HashMap<String, CacheEntry>>,
    write_lock: Mutex<()>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(Self {
            dir: Some(dir),
            ..Self::default()
        })
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn key(backend_id: &str, request: &ChatRequest) -> String {
        let mut h = Sha256::new();
        h.update(backend_id.as_bytes());
        h.update(b"\n");
        h.update(request.canonical_json().as_bytes());
        hex::encode(h.finalize())
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(format!("{key}.json")))
    }

    pub fn get(&self, backend_id: &str, request: &ChatRequest) -> Option<BackendReply> {
        let key = Self::key(backend_id, request);
        if let Some(e) = self.memory.read().expect("cache lock").get(&key) {
            return Some(e.response.clone());
        }
        let path = self.path_for(&key)?;
        let text = fs::read_to_string(path).ok()?;
        let entry: CacheEntry = serde_json::from_str(&text).ok()?;
        // A hash collision or hand-edited file must not serve a wrong answer.
        if entry.backend_id != backend_id || entry.request != *request {
            return None;
        }
        let reply = entry.response.clone();
        self.memory.write().expect("cache lock").insert(key, entry);
        Some(reply)
    }

    pub fn put(
        &self,
        backend_id: &str,
        request: &ChatRequest,
        response: &BackendReply,
    ) -> std::io::Result<()> {
        let key = Self::key(backend_id, request);
        let entry = CacheEntry {
            backend_id: backend_id.to_string(),
            request: request.clone(),
            response: response.clone(),
        };
        let _guard = self.write_lock.lock().expect("cache write lock");
        if let Some(path) = self.path_for(&key) {
            let tmp = path.with_extension("json.tmp");
            let mut f = fs::File::create(&tmp)?;
            f.write_all(
                serde_json::to_string_pretty(&entry)
                    .expect("entry serializes")
                    .as_bytes(),
            )?;
            f.write_all(b"\n")?;
            f.sync_all()?;
            fs::rename(&tmp, &path)?;
        }
        self.memory.write().expect("cache lock").insert(key, entry);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.memory.read().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
