use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::GatewayError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntryKind {
    Chat,
    Score,
}

/// One line of a cassette file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CassetteEntry {
    pub fingerprint: String,
    pub kind: EntryKind,
    pub request: serde_json::Value,
    pub response: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logprobs: Option<Vec<f64>>,
}

/// Append-only JSON-lines store of recorded model responses, keyed by
/// request fingerprint. The first entry for a fingerprint wins.
pub struct Cassette {
    path: PathBuf,
    entries: Mutex<HashMap<String, CassetteEntry>>,
    writer: Mutex<Option<File>>,
}

impl Cassette {
    /// Opens a cassette for replay. The file must exist.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        if !path.exists() {
            return Err(GatewayError::CassetteIo {
                path,
                message: "cassette file does not exist".into(),
            });
        }
        let entries = Self::read_entries(&path)?;
        Ok(Self {
            path,
            entries: Mutex::new(entries),
            writer: Mutex::new(None),
        })
    }

    /// Opens (creating if needed) a cassette for recording.
    pub fn open_for_append(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref().to_path_buf();
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| GatewayError::CassetteIo {
                path: parent.to_path_buf(),
                message: e.to_string(),
            })?;
        }
        let entries = if path.exists() {
            Self::read_entries(&path)?
        } else {
            HashMap::new()
        };
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(|e| GatewayError::CassetteIo {
                path: path.clone(),
                message: e.to_string(),
            })?;
        Ok(Self {
            path,
            entries: Mutex::new(entries),
            writer: Mutex::new(Some(file)),
        })
    }

    fn read_entries(path: &Path) -> Result<HashMap<String, CassetteEntry>, GatewayError> {
        let file = File::open(path).map_err(|e| GatewayError::CassetteIo {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let mut entries = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::CassetteIo {
                path: path.to_path_buf(),
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: CassetteEntry =
                serde_json::from_str(&line).map_err(|e| GatewayError::CassetteIo {
                    path: path.to_path_buf(),
                    message: format!("line {}: {e}", lineno + 1),
                })?;
            entries.entry(entry.fingerprint.clone()).or_insert(entry);
        }
        Ok(entries)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cassette lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, fingerprint: &str) -> Option<CassetteEntry> {
        self.entries
            .lock()
            .expect("cassette lock")
            .get(fingerprint)
            .cloned()
    }

    /// Appends one entry as a single line write. Entries whose fingerprint is
    /// already present are not written again.
    pub fn append(&self, entry: CassetteEntry) -> Result<(), GatewayError> {
        let mut entries = self.entries.lock().expect("cassette lock");
        if entries.contains_key(&entry.fingerprint) {
            return Ok(());
        }
        let mut writer = self.writer.lock().expect("cassette writer lock");
        let file = writer.as_mut().ok_or_else(|| GatewayError::CassetteIo {
            path: self.path.clone(),
            message: "cassette opened read-only".into(),
        })?;
        let mut line = serde_json::to_string(&entry).map_err(|e| GatewayError::CassetteIo {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        line.push('\n');
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| GatewayError::CassetteIo {
                path: self.path.clone(),
                message: e.to_string(),
            })?;
        entries.insert(entry.fingerprint.clone(), entry);
        Ok(())
    }

    /// All entries sorted by fingerprint.
    pub fn sorted_entries(&self) -> Vec<CassetteEntry> {
        let mut v: Vec<_> = self
            .entries
            .lock()
            .expect("cassette lock")
            .values()
            .cloned()
            .collect();
        v.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        v
    }

    /// Rewrites the file with entries sorted by fingerprint, so a cassette
    /// recorded by parallel workers is byte-stable.
    pub fn compact(&self) -> Result<(), GatewayError> {
        // Same lock order as `append`: entries, then writer.
        let entries = self.entries.lock().expect("cassette lock");
        let mut writer = self.writer.lock().expect("cassette writer lock");
        let io_err = |e: std::io::Error| GatewayError::CassetteIo {
            path: self.path.clone(),
            message: e.to_string(),
        };
        let mut sorted: Vec<&CassetteEntry> = entries.values().collect();
        sorted.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        let mut text = String::new();
        for entry in sorted {
            text.push_str(&serde_json::to_string(&entry).map_err(|e| {
                GatewayError::CassetteIo {
                    path: self.path.clone(),
                    message: e.to_string(),
                }
            })?);
            text.push('\n');
        }
        let tmp = self.path.with_extension("jsonl.tmp");
        std::fs::write(&tmp, text).map_err(io_err)?;
        std::fs::rename(&tmp, &self.path).map_err(io_err)?;
        if writer.is_some() {
            *writer = Some(
                OpenOptions::new()
                    .append(true)
                    .open(&self.path)
                    .map_err(io_err)?,
            );
        }
        Ok(())
    }
}
