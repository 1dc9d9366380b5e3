//! Content-addressed response cache.
//!
//! Keys are SHA-256 digests of (backend kind, model, prompt or text). On disk
//! each entry lives at `<dir>/<first two hex chars>/<digest>.json`. Each key
//! has its own lock, so concurrent requests for the same key compute once.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::GatewayError;

pub fn cache_key(kind: &str, model: &str, text: &str) -> String {
    let mut h = Sha256::new();
    for part in [kind, model, text] {
        h.update((part.len() as u64).to_le_bytes());
        h.update(part.as_bytes());
    }
    hex::encode(h.finalize())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Entry {
    Text { text: String },
    Embedding { values: Vec<f64> },
}

#[derive(Debug, Serialize, Deserialize)]
struct CacheFile {
    digest: String,
    response: Entry,
}

type Slot = Arc<Mutex<Option<Entry>>>;

#[derive(Debug, Default)]
pub struct ResponseCache {
    dir: Option<PathBuf>,
    slots: Mutex<HashMap<String, Slot>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> Self {
        Self {
            dir: Some(dir.into()),
            slots: Mutex::default(),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    pub fn entry_path(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2]).join(format!("{key}.json")))
    }

    fn slot(&self, key: &str) -> Slot {
        let mut slots = self.slots.lock().expect("cache index poisoned");
        slots.entry(key.to_string()).or_default().clone()
    }

    fn read_file(&self, key: &str) -> Option<Entry> {
        let path = self.entry_path(key)?;
        let bytes = std::fs::read(&path).ok()?;
        match serde_json::from_slice::<CacheFile>(&bytes) {
            Ok(f) if f.digest == key => Some(f.response),
            _ => {
                log::warn!("ignoring unreadable cache entry {}", path.display());
                None
            }
        }
    }

    fn write_file(&self, key: &str, entry: &Entry) -> Result<(), GatewayError> {
        let Some(path) = self.entry_path(key) else {
            return Ok(());
        };
        let file = CacheFile {
            digest: key.to_string(),
            response: entry.clone(),
        };
        let bytes = serde_json::to_vec(&file).expect("cache entry serializes");
        crate::io::write_atomic(&path, &bytes).map_err(|e| GatewayError::Cache(e.to_string()))
    }

    fn get_or_insert(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Entry, GatewayError>,
    ) -> Result<(Entry, bool), GatewayError> {
        let slot = self.slot(key);
        let mut guard = slot.lock().expect("cache slot poisoned");
        if let Some(e) = guard.as_ref() {
            return Ok((e.clone(), true));
        }
        if let Some(e) = self.read_file(key) {
            *guard = Some(e.clone());
            return Ok((e, true));
        }
        let e = compute()?;
        self.write_file(key, &e)?;
        *guard = Some(e.clone());
        Ok((e, false))
    }

    pub fn get_or_insert_text(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<String, GatewayError>,
    ) -> Result<(String, bool), GatewayError> {
        match self.get_or_insert(key, || compute().map(|text| Entry::Text { text }))? {
            (Entry::Text { text }, hit) => Ok((text, hit)),
            _ => Err(GatewayError::Cache(format!(
                "entry {key} is not a text response"
            ))),
        }
    }

    pub fn get_or_insert_embedding(
        &self,
        key: &str,
        compute: impl FnOnce() -> Result<Vec<f64>, GatewayError>,
    ) -> Result<(Vec<f64>, bool), GatewayError> {
        match self.get_or_insert(key, || compute().map(|values| Entry::Embedding { values }))? {
            (Entry::Embedding { values }, hit) => Ok((values, hit)),
            _ => Err(GatewayError::Cache(format!(
                "entry {key} is not an embedding"
            ))),
        }
    }
}
