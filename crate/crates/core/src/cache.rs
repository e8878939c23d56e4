//! Record/replay store for remote responses.
//!
//! Each line of the cache file is `{"key": <hex sha256>, "response": <json>}`.
//! The key hashes the endpoint URL and the canonical request body, so a
//! replayed run issues no network traffic for requests it has seen before.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::Result;

#[derive(Serialize, Deserialize)]
struct CacheLine {
    key: String,
    response: Value,
}

pub struct ResponseCache {
    path: PathBuf,
    entries: Mutex<HashMap<String, Value>>,
    file: Mutex<File>,
}

impl ResponseCache {
    /// Opens (creating if needed) a cache file and loads its entries.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let mut entries = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path)?);
            for line in reader.lines() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: CacheLine = serde_json::from_str(&line)?;
                entries.insert(rec.key, rec.response);
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&path)?;
        Ok(Self {
            path,
            entries: Mutex::new(entries),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn key(url: &str, body: &Value) -> String {
        let mut h = Sha256::new();
        h.update(url.as_bytes());
        h.update(b"\n");
        // serde_json maps are key-sorted, so this serialization is canonical
        h.update(body.to_string().as_bytes());
        hex::encode(h.finalize())
    }

    pub fn get(&self, key: &str) -> Option<Value> {
        self.entries.lock().unwrap().get(key).cloned()
    }

    pub fn put(&self, key: String, response: Value) -> Result<()> {
        let line = serde_json::to_string(&CacheLine {
            key: key.clone(),
            response: response.clone(),
        })?;
        let mut entries = self.entries.lock().unwrap();
        if entries.contains_key(&key) {
            return Ok(());
        }
        {
            let mut f = self.file.lock().unwrap();
            writeln!(f, "{line}")?;
            f.flush()?;
        }
        entries.insert(key, response);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
