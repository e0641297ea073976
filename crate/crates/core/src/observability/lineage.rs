//! Content-addressed configuration lineage.
//!
//! A snapshot's payload is the canonical JSON of every file under the config
//! root plus the compiled tool rosters; its hash is the SHA-256 of that
//! payload. Snapshots link to the snapshot that was current when they were
//! taken, and tags name snapshots for rollback. All records are appended to
//! a JSON-lines file.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::tools::roster::{toolset, Specialist, TOOL_UNIVERSE};

pub const LINEAGE_FILE: &str = "config_lineage.jsonl";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigPayload {
    /// Relative path (with `/` separators) to file contents.
    pub files: BTreeMap<String, String>,
    pub rosters: BTreeMap<String, Vec<String>>,
}

impl ConfigPayload {
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).expect("payload serializes")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSnapshot {
    pub hash: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parent_hash: Option<String>,
    pub created_at: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Canonical payload text; the hash is computed over these bytes.
    pub payload: String,
}

impl ConfigSnapshot {
    pub fn decode(&self) -> Result<ConfigPayload, LineageError> {
        serde_json::from_str(&self.payload).map_err(|e| LineageError::Corrupt(e.to_string()))
    }
}

#[derive(Debug, Error)]
pub enum LineageError {
    #[error("config i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("config file {0} is not UTF-8 text")]
    NotText(String),
    #[error("corrupt lineage data: {0}")]
    Corrupt(String),
    #[error("tag '{0}' already exists")]
    DuplicateTag(String),
    #[error("unknown tag '{0}'")]
    UnknownTag(String),
    #[error("unknown snapshot '{0}'")]
    UnknownHash(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
enum Record {
    Snapshot(ConfigSnapshot),
    Tag { hash: String, label: String },
    Head { hash: String },
}

pub fn hash_payload(payload: &str) -> String {
    let digest = Sha256::digest(payload.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn collect_files(
    root: &Path,
    dir: &Path,
    out: &mut BTreeMap<String, String>,
) -> Result<(), LineageError> {
    let mut entries: Vec<_> = std::fs::read_dir(dir)?.collect::<Result<_, _>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            collect_files(root, &path, out)?;
        } else {
            let rel = path
                .strip_prefix(root)
                .expect("walked under root")
                .components()
                .map(|c| c.as_os_str().to_string_lossy().into_owned())
                .collect::<Vec<_>>()
                .join("/");
            let bytes = std::fs::read(&path)?;
            let text = String::from_utf8(bytes).map_err(|_| LineageError::NotText(rel.clone()))?;
            out.insert(rel, text);
        }
    }
    Ok(())
}

/// Reads the config tree and the compiled rosters into a payload.
pub fn config_payload(config_root: &Path) -> Result<ConfigPayload, LineageError> {
    let mut files = BTreeMap::new();
    collect_files(config_root, config_root, &mut files)?;
    Ok(ConfigPayload {
        files,
        rosters: roster_table(),
    })
}

/// The specialist rosters and the full tool universe, keyed by agent name
/// and `universe`.
pub fn roster_table() -> BTreeMap<String, Vec<String>> {
    let mut rosters: BTreeMap<String, Vec<String>> = Specialist::ALL
        .iter()
        .map(|s| {
            (
                s.as_str().to_string(),
                toolset(*s)
                    .tool_names
                    .iter()
                    .map(|t| t.to_string())
                    .collect(),
            )
        })
        .collect();
    rosters.insert(
        "universe".into(),
        TOOL_UNIVERSE.iter().map(|t| t.to_string()).collect(),
    );
    rosters
}

/// Writes the payload's files under `dir`, recreating the config tree.
pub fn materialize(payload: &ConfigPayload, dir: &Path) -> Result<(), LineageError> {
    for (rel, text) in &payload.files {
        let path = dir.join(rel);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, text)?;
    }
    Ok(())
}

#[derive(Debug, Default)]
pub struct Lineage {
    path: Option<PathBuf>,
    snapshots: Vec<ConfigSnapshot>,
    head: Option<String>,
}

impl Lineage {
    pub fn in_memory() -> Self {
        Self::default()
    }

    pub fn open(path: &Path) -> Result<Self, LineageError> {
        let mut l = Self {
            path: Some(path.to_path_buf()),
            ..Self::default()
        };
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: Record = serde_json::from_str(&line)
                    .map_err(|e| LineageError::Corrupt(format!("line {}: {e}", i + 1)))?;
                l.apply(rec)?;
            }
        }
        Ok(l)
    }

    fn apply(&mut self, rec: Record) -> Result<(), LineageError> {
        match rec {
            Record::Snapshot(s) => {
                if hash_payload(&s.payload) != s.hash {
                    return Err(LineageError::Corrupt(format!(
                        "snapshot {} fails its hash",
                        s.hash
                    )));
                }
                self.head = Some(s.hash.clone());
                self.snapshots.push(s);
            }
            Record::Tag { hash, label } => {
                let s = self.find_mut(&hash)?;
                s.tag = Some(label);
            }
            Record::Head { hash } => {
                self.find(&hash)?;
                self.head = Some(hash);
            }
        }
        Ok(())
    }

    fn append(&mut self, rec: Record) -> Result<(), LineageError> {
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(
                f,
                "{}",
                serde_json::to_string(&rec).expect("record serializes")
            )?;
        }
        self.apply(rec)
    }

    fn find_mut(&mut self, hash: &str) -> Result<&mut ConfigSnapshot, LineageError> {
        self.snapshots
            .iter_mut()
            .find(|s| s.hash == hash)
            .ok_or_else(|| LineageError::UnknownHash(hash.to_string()))
    }

    pub fn find(&self, hash: &str) -> Result<&ConfigSnapshot, LineageError> {
        self.snapshots
            .iter()
            .find(|s| s.hash == hash)
            .ok_or_else(|| LineageError::UnknownHash(hash.to_string()))
    }

    pub fn head(&self) -> Option<&ConfigSnapshot> {
        self.head.as_deref().and_then(|h| self.find(h).ok())
    }

    pub fn snapshots(&self) -> &[ConfigSnapshot] {
        &self.snapshots
    }

    /// Records `payload` unless it equals the head. Returning to an older
    /// configuration moves the head back to that snapshot without a new
    /// entry, so every hash appears once and parent links never cycle.
    /// The flag is true when a new snapshot was appended.
    pub fn snapshot_payload(
        &mut self,
        payload: &ConfigPayload,
        now_s: f64,
    ) -> Result<(ConfigSnapshot, bool), LineageError> {
        let text = payload.canonical();
        let hash = hash_payload(&text);
        if let Ok(existing) = self.find(&hash) {
            let existing = existing.clone();
            if self.head.as_deref() != Some(hash.as_str()) {
                self.append(Record::Head { hash })?;
            }
            return Ok((existing, false));
        }
        let snap = ConfigSnapshot {
            hash,
            parent_hash: self.head.clone(),
            created_at: now_s,
            tag: None,
            payload: text,
        };
        self.append(Record::Snapshot(snap.clone()))?;
        Ok((snap, true))
    }

    pub fn snapshot_config(
        &mut self,
        config_root: &Path,
        now_s: f64,
    ) -> Result<(ConfigSnapshot, bool), LineageError> {
        self.snapshot_payload(&config_payload(config_root)?, now_s)
    }

    pub fn tag(&mut self, hash: &str, label: &str) -> Result<ConfigSnapshot, LineageError> {
        if self
            .snapshots
            .iter()
            .any(|s| s.tag.as_deref() == Some(label))
        {
            return Err(LineageError::DuplicateTag(label.to_string()));
        }
        if let Some(existing) = &self.find(hash)?.tag {
            return Err(LineageError::Corrupt(format!(
                "snapshot {hash} is already tagged '{existing}'"
            )));
        }
        self.append(Record::Tag {
            hash: hash.to_string(),
            label: label.to_string(),
        })?;
        Ok(self.find(hash)?.clone())
    }

    pub fn get_by_tag(&self, label: &str) -> Result<ConfigSnapshot, LineageError> {
        self.snapshots
            .iter()
            .find(|s| s.tag.as_deref() == Some(label))
            .cloned()
            .ok_or_else(|| LineageError::UnknownTag(label.to_string()))
    }

    /// The snapshot and its ancestors, newest first.
    pub fn chain(&self, hash: &str) -> Result<Vec<ConfigSnapshot>, LineageError> {
        let mut out = Vec::new();
        let mut cur = Some(hash.to_string());
        while let Some(h) = cur {
            if out.len() > self.snapshots.len() {
                return Err(LineageError::Corrupt("parent links form a cycle".into()));
            }
            let s = self.find(&h)?.clone();
            cur = s.parent_hash.clone();
            out.push(s);
        }
        Ok(out)
    }
}
