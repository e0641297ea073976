//! Long-term memory: hashed bag-of-words embeddings with cosine search,
//! persisted as one JSON record per line.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::util::fnv1a64;

pub const EMBED_DIM: usize = 256;

/// Lowercased alphanumeric tokens hashed into 256 signed buckets, then
/// L2-normalized. Bucket is `hash mod 256`; bit 8 of the hash picks the
/// sign. Text without tokens embeds to the zero vector.
pub fn embed(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; EMBED_DIM];
    let lower = text.to_lowercase();
    for token in lower
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
    {
        let h = fnv1a64(token.as_bytes());
        let sign = if (h >> 8) & 1 == 0 { 1.0 } else { -1.0 };
        v[(h % EMBED_DIM as u64) as usize] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryRecord {
    pub id: String,
    pub text: String,
    pub embedding: Vec<f64>,
    #[serde(default)]
    pub metadata: BTreeMap<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MemoryHit {
    pub id: String,
    pub score: f64,
    pub text: String,
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("k must be at least 1")]
    InvalidK,
    #[error("memory store i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("memory store line {line}: {message}")]
    Corrupt { line: usize, message: String },
}

#[derive(Debug, Default)]
struct Inner {
    records: Vec<MemoryRecord>,
    next: u64,
}

#[derive(Debug, Default)]
pub struct MemoryStore {
    inner: Mutex<Inner>,
    path: Option<PathBuf>,
}

impl MemoryStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens (or creates) a store backed by `path`, loading existing records.
    pub fn open(path: &Path) -> Result<Self, MemoryError> {
        let mut inner = Inner::default();
        if path.exists() {
            for (i, line) in BufReader::new(File::open(path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let rec: MemoryRecord =
                    serde_json::from_str(&line).map_err(|e| MemoryError::Corrupt {
                        line: i + 1,
                        message: e.to_string(),
                    })?;
                inner.records.push(rec);
            }
            inner.next = inner.records.len() as u64;
        }
        Ok(Self {
            inner: Mutex::new(inner),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn len(&self) -> usize {
        self.inner
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .records
            .len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn records(&self) -> Vec<MemoryRecord> {
        self.inner
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .records
            .clone()
    }

    pub fn add(
        &self,
        text: &str,
        metadata: BTreeMap<String, Value>,
    ) -> Result<String, MemoryError> {
        let mut inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        inner.next += 1;
        let rec = MemoryRecord {
            id: format!("mem-{:06}", inner.next),
            text: text.to_string(),
            embedding: embed(text),
            metadata,
        };
        if let Some(path) = &self.path {
            let mut f = OpenOptions::new().create(true).append(true).open(path)?;
            writeln!(
                f,
                "{}",
                serde_json::to_string(&rec).expect("record serializes")
            )?;
        }
        let id = rec.id.clone();
        inner.records.push(rec);
        Ok(id)
    }

    /// Top-k records by cosine similarity, ties broken by id ascending.
    pub fn search(&self, query: &str, k: usize) -> Result<Vec<MemoryHit>, MemoryError> {
        if k == 0 {
            return Err(MemoryError::InvalidK);
        }
        let q = embed(query);
        if q.iter().all(|x| *x == 0.0) {
            return Ok(Vec::new());
        }
        let inner = self.inner.lock().unwrap_or_else(|p| p.into_inner());
        let mut hits: Vec<MemoryHit> = inner
            .records
            .iter()
            .map(|r| MemoryHit {
                id: r.id.clone(),
                score: cosine(&q, &r.embedding),
                text: r.text.clone(),
            })
            .collect();
        hits.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.id.cmp(&b.id)));
        hits.truncate(k);
        Ok(hits)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_properties() {
        assert_eq!(embed("hplc retention"), embed("hplc retention"));
        assert!(embed("").iter().all(|x| *x == 0.0));
        assert!(embed("  -- ").iter().all(|x| *x == 0.0));
        let a = embed("hplc retention time");
        let b = embed("retention time hplc");
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-9);
    }

    #[test]
    fn self_search_and_empty_store() {
        let s = MemoryStore::in_memory();
        assert!(s.search("anything", 3).unwrap().is_empty());
        s.add("HPLC column temperature 40C", BTreeMap::new())
            .unwrap();
        s.add("synthesis of aspirin", BTreeMap::new()).unwrap();
        let hits = s.search("HPLC column temperature 40C", 1).unwrap();
        assert_eq!(hits[0].id, "mem-000001");
        assert!((hits[0].score - 1.0).abs() < 1e-12);
        assert!(matches!(s.search("x", 0), Err(MemoryError::InvalidK)));
        assert!(s.search("", 2).unwrap().is_empty());
    }

    #[test]
    fn persistence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("memory.jsonl");
        let s = MemoryStore::open(&path).unwrap();
        for t in ["alpha beta", "beta gamma", "gamma delta"] {
            s.add(
                t,
                BTreeMap::from([("conversation_id".to_string(), Value::from("c1"))]),
            )
            .unwrap();
        }
        let before = s.search("beta", 3).unwrap();
        let reloaded = MemoryStore::open(&path).unwrap();
        assert_eq!(reloaded.records(), s.records());
        assert_eq!(reloaded.search("beta", 3).unwrap(), before);
        assert_eq!(reloaded.add("new", BTreeMap::new()).unwrap(), "mem-000004");
    }
}
