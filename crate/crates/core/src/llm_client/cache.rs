use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};

use crate::prompting::ChatMessage;

use super::{ClientError, DecodingParams};

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub digest: String,
    pub model_id: String,
    pub params: DecodingParams,
    pub messages: Vec<ChatMessage>,
    pub response_text: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

/// Append-only JSONL response cache keyed by request digest.
///
/// The whole file is loaded on open. Later lines for the same digest win.
pub struct ResponseCache {
    path: Option<PathBuf>,
    entries: RwLock<HashMap<String, CacheEntry>>,
    writer: Mutex<Option<File>>,
}

impl ResponseCache {
    pub fn in_memory() -> Self {
        ResponseCache {
            path: None,
            entries: RwLock::new(HashMap::new()),
            writer: Mutex::new(None),
        }
    }

    pub fn open(path: impl AsRef<Path>) -> Result<Self, ClientError> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let file = File::open(&path).map_err(|e| ClientError::CacheIo(e.to_string()))?;
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| ClientError::CacheIo(e.to_string()))?;
                if line.trim().is_empty() {
                    continue;
                }
                let entry: CacheEntry = serde_json::from_str(&line).map_err(|e| ClientError::CacheCorrupt {
                    line: i + 1,
                    reason: e.to_string(),
                })?;
                entries.insert(entry.digest.clone(), entry);
            }
        } else if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| ClientError::CacheIo(e.to_string()))?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| ClientError::CacheIo(e.to_string()))?;
        Ok(ResponseCache {
            path: Some(path),
            entries: RwLock::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn get(&self, digest: &str) -> Option<CacheEntry> {
        self.entries.read().expect("cache lock poisoned").get(digest).cloned()
    }

    pub fn len(&self) -> usize {
        self.entries.read().expect("cache lock poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Writes the entry through to disk, then makes it visible to readers.
    pub fn insert(&self, entry: CacheEntry) -> Result<(), ClientError> {
        let mut line = serde_json::to_string(&entry).map_err(|e| ClientError::CacheIo(e.to_string()))?;
        line.push('\n');
        {
            let mut writer = self.writer.lock().expect("cache writer poisoned");
            if let Some(file) = writer.as_mut() {
                file.write_all(line.as_bytes())
                    .and_then(|_| file.flush())
                    .map_err(|e| ClientError::CacheIo(e.to_string()))?;
            }
        }
        self.entries
            .write()
            .expect("cache lock poisoned")
            .insert(entry.digest.clone(), entry);
        Ok(())
    }
}
