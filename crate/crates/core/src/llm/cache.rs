use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::LlmError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "lowercase")]
pub enum CachedValue {
    Text(String),
    Score(f64),
}

/// Content-addressed response store: memory in front, optional directory behind.
///
/// On disk each entry lives at `<dir>/<key[..2]>/<key>.json`.
#[derive(Debug)]
pub struct ResponseCache {
    memory: Mutex<HashMap<String, CachedValue>>,
    dir: Option<PathBuf>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        Self {
            memory: Mutex::new(HashMap::new()),
            dir: None,
        }
    }

    pub fn on_disk(dir: impl AsRef<Path>) -> Result<Self, LlmError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)
            .map_err(|e| LlmError::Cache(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            memory: Mutex::new(HashMap::new()),
            dir: Some(dir),
        })
    }

    fn path_for(&self, key: &str) -> Option<PathBuf> {
        self.dir
            .as_ref()
            .map(|d| d.join(&key[..2.min(key.len())]).join(format!("{key}.json")))
    }

    pub fn get(&self, key: &str) -> Result<Option<CachedValue>, LlmError> {
        if let Some(v) = self.memory.lock().unwrap().get(key) {
            return Ok(Some(v.clone()));
        }
        let Some(path) = self.path_for(key) else {
            return Ok(None);
        };
        let raw = match fs::read_to_string(&path) {
            Ok(raw) => raw,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(LlmError::Cache(format!("{}: {e}", path.display()))),
        };
        match serde_json::from_str::<CachedValue>(&raw) {
            Ok(v) => {
                self.memory.lock().unwrap().insert(key.to_string(), v.clone());
                Ok(Some(v))
            }
            Err(e) => {
                // A torn or foreign file is treated as a miss and overwritten.
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                Ok(None)
            }
        }
    }

    pub fn put(&self, key: &str, value: CachedValue) -> Result<(), LlmError> {
        if let Some(path) = self.path_for(key) {
            let parent = path.parent().expect("cache entry has a parent");
            fs::create_dir_all(parent)
                .map_err(|e| LlmError::Cache(format!("{}: {e}", parent.display())))?;
            let body = serde_json::to_string(&value).expect("cache value serializes");
            let tmp = parent.join(format!(".{key}.{}.tmp", std::process::id()));
            let write = || -> std::io::Result<()> {
                let mut f = fs::File::create(&tmp)?;
                f.write_all(body.as_bytes())?;
                f.sync_all()?;
                fs::rename(&tmp, &path)
            };
            write().map_err(|e| LlmError::Cache(format!("{}: {e}", path.display())))?;
        }
        self.memory.lock().unwrap().insert(key.to_string(), value);
        Ok(())
    }
}
