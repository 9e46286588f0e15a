//! Append-only response cache keyed by a SHA-256 digest of the request
//! identity.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub key: String,
    pub response_text: String,
    pub created_at: DateTime<Utc>,
}

/// Hex SHA-256 of the JSON array `[backend, model_id, temperature, prompt]`.
/// JSON string escaping makes the encoding injective over the tuple.
pub fn cache_key(backend: &str, model_id: &str, temperature: f64, prompt: &str) -> String {
    let canonical = serde_json::to_string(&(backend, model_id, temperature, prompt)).expect("tuple serializes");
    hex::encode(Sha256::digest(canonical.as_bytes()))
}

struct Inner {
    index: HashMap<String, String>,
    file: Option<File>,
}

pub struct ResponseCache {
    path: Option<PathBuf>,
    inner: Mutex<Inner>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache { path: None, inner: Mutex::new(Inner { index: HashMap::new(), file: None }) }
    }

    /// Loads every entry already in `path` and appends new ones to it. The
    /// first entry for a key wins; a truncated trailing line is ignored.
    pub fn open(path: &Path) -> std::io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
        let mut index = HashMap::new();
        if path.exists() {
            for line in BufReader::new(File::open(path)?).lines() {
                let line = line?;
                if let Ok(entry) = serde_json::from_str::<CacheEntry>(&line) {
                    index.entry(entry.key).or_insert(entry.response_text);
                }
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        let bytes = std::fs::read(path)?;
        if bytes.last().is_some_and(|b| *b != b'\n') {
            file.write_all(b"\n")?;
        }
        Ok(ResponseCache { path: Some(path.to_path_buf()), inner: Mutex::new(Inner { index, file: Some(file) }) })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, key: &str) -> Option<String> {
        self.inner.lock().expect("cache lock").index.get(key).cloned()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("cache lock").index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stores `response` unless the key is already present, and returns the
    /// value now associated with the key.
    pub fn put(&self, key: &str, response: &str) -> std::io::Result<String> {
        let mut inner = self.inner.lock().expect("cache lock");
        if let Some(existing) = inner.index.get(key) {
            return Ok(existing.clone());
        }
        if let Some(file) = inner.file.as_mut() {
            let entry = CacheEntry { key: key.to_string(), response_text: response.to_string(), created_at: Utc::now() };
            let mut line = serde_json::to_string(&entry).expect("entry serializes");
            line.push('\n');
            file.write_all(line.as_bytes())?;
            file.flush()?;
        }
        inner.index.insert(key.to_string(), response.to_string());
        Ok(response.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keys_are_stable_and_sensitive() {
        let k = cache_key("b", "m", 0.0, "p");
        assert_eq!(k, cache_key("b", "m", 0.0, "p"));
        assert_eq!(k.len(), 64);
        assert_ne!(k, cache_key("b", "m", 0.0, "p "));
        assert_ne!(k, cache_key("b", "m2", 0.0, "p"));
        assert_ne!(k, cache_key("b", "m", 0.5, "p"));
        // Boundary shifting between fields must not collide.
        assert_ne!(cache_key("ab", "c", 0.0, "p"), cache_key("a", "bc", 0.0, "p"));
    }

    #[test]
    fn persists_across_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.jsonl");
        {
            let cache = ResponseCache::open(&path).unwrap();
            assert_eq!(cache.put("k1", "first").unwrap(), "first");
            assert_eq!(cache.put("k1", "second").unwrap(), "first");
        }
        std::fs::OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"key\":\"tr").unwrap();
        let cache = ResponseCache::open(&path).unwrap();
        assert_eq!(cache.get("k1").as_deref(), Some("first"));
        assert_eq!(cache.len(), 1);
    }
}
