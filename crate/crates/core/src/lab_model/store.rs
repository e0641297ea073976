//! Single-file canonical snapshot of a [`World`].
//!
//! The file is one pretty-printed JSON document with sorted keys:
//! `{"checksum": <sha256 of the compact world>, "world": {...}}`. Loading
//! rejects anything that is not byte-for-byte the canonical rendering of its
//! own content, so equal worlds always produce identical files and any edited
//! byte is caught.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{seed_world, World, WorldError};

pub const SNAPSHOT_FILE: &str = "world.snapshot";

pub fn snapshot_path(data_dir: &Path) -> PathBuf {
    data_dir.join(SNAPSHOT_FILE)
}

fn world_value(world: &World) -> Result<Value, WorldError> {
    serde_json::to_value(world).map_err(|e| WorldError::Persist(e.to_string()))
}

fn checksum(world: &Value) -> String {
    let compact = world.to_string();
    let digest = Sha256::digest(compact.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn render(world: Value) -> String {
    let doc = json!({ "checksum": checksum(&world), "world": world });
    let mut text = serde_json::to_string_pretty(&doc).expect("json value always renders");
    text.push('\n');
    text
}

/// Canonical snapshot text for `world`.
pub fn to_snapshot_text(world: &World) -> Result<String, WorldError> {
    Ok(render(world_value(world)?))
}

/// Writes the snapshot atomically (temp file in the same directory, then
/// rename).
pub fn persist_world(world: &World, path: &Path) -> Result<(), WorldError> {
    world.validate()?;
    let text = to_snapshot_text(world)?;
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let persist_err = |e: std::io::Error| WorldError::Persist(format!("{}: {e}", path.display()));
    fs::create_dir_all(dir).map_err(persist_err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(persist_err)?;
    tmp.write_all(text.as_bytes()).map_err(persist_err)?;
    tmp.as_file().sync_all().map_err(persist_err)?;
    tmp.persist(path).map_err(|e| persist_err(e.error))?;
    Ok(())
}

/// Loads a snapshot, or returns the seed world when `path` does not exist.
pub fn load_world(path: &Path, seed: u64) -> Result<World, WorldError> {
    let bytes = match fs::read(path) {
        Ok(b) => b,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(seed_world(seed)),
        Err(e) => return Err(WorldError::Load(format!("{}: {e}", path.display()))),
    };
    let text =
        String::from_utf8(bytes).map_err(|_| WorldError::Load("snapshot is not UTF-8".into()))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| WorldError::Load(format!("malformed snapshot: {e}")))?;
    let (Some(stored), Some(world_val)) = (
        doc.get("checksum").and_then(Value::as_str),
        doc.get("world"),
    ) else {
        return Err(WorldError::Load(
            "snapshot missing checksum or world".into(),
        ));
    };
    if checksum(world_val) != stored {
        return Err(WorldError::Load("checksum mismatch".into()));
    }
    if render(world_val.clone()) != text {
        return Err(WorldError::Load("snapshot is not in canonical form".into()));
    }
    let world: World = serde_json::from_value(world_val.clone())
        .map_err(|e| WorldError::Load(format!("malformed world: {e}")))?;
    world
        .validate()
        .map_err(|e| WorldError::Load(e.to_string()))?;
    Ok(world)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab_model::{Job, JobState};

    #[test]
    fn absent_path_gives_seed() {
        let dir = tempfile::tempdir().unwrap();
        let w = load_world(&dir.path().join("nothing"), 5).unwrap();
        assert_eq!(w, seed_world(5));
    }

    #[test]
    fn round_trip_and_byte_identity() {
        let dir = tempfile::tempdir().unwrap();
        let path = snapshot_path(dir.path());
        let w = seed_world(3);
        persist_world(&w, &path).unwrap();
        let first = fs::read(&path).unwrap();
        persist_world(&w, &path).unwrap();
        assert_eq!(first, fs::read(&path).unwrap());
        assert_eq!(load_world(&path, 0).unwrap(), w);
        let parsed: Value = serde_json::from_slice(&first).unwrap();
        assert!(parsed.is_object());
    }

    #[test]
    fn corrupted_byte_fails_to_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = snapshot_path(dir.path());
        persist_world(&seed_world(3), &path).unwrap();
        let clean = fs::read(&path).unwrap();
        // Flip a byte in a name, in whitespace and in the checksum.
        let name_at = clean.windows(7).position(|w| w == b"Dana Ki").unwrap();
        let ws_at = clean.iter().position(|&b| b == b' ').unwrap();
        let sum_at = clean.windows(8).position(|w| w == b"checksum").unwrap() + 13;
        for at in [name_at, ws_at, sum_at] {
            let mut bad = clean.clone();
            bad[at] = bad[at].wrapping_add(1);
            fs::write(&path, &bad).unwrap();
            assert!(
                matches!(load_world(&path, 0), Err(WorldError::Load(_))),
                "offset {at}"
            );
        }
    }

    #[test]
    fn missing_workflow_reference_names_invariant() {
        let mut w = seed_world(3);
        w.jobs.insert(
            "j1".into(),
            Job {
                id: "j1".into(),
                workflow_id: "wf_missing".into(),
                lab_id: "lab-a".into(),
                creator_user_id: "u1".into(),
                parameters: Default::default(),
                state: JobState::Created,
                created_at: 0.0,
                started_at: None,
                ended_at: None,
                assigned_actor_ids: vec![],
                result: None,
                attachment_ids: vec![],
            },
        );
        // Write the invalid world bypassing persist's validation.
        let dir = tempfile::tempdir().unwrap();
        let path = snapshot_path(dir.path());
        fs::write(&path, to_snapshot_text(&w).unwrap()).unwrap();
        let err = load_world(&path, 0).unwrap_err().to_string();
        assert!(err.contains("unresolved workflow_id"), "{err}");
    }

    #[test]
    fn unwritable_path_is_persistence_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        fs::write(&blocker, "x").unwrap();
        let err = persist_world(&seed_world(1), &blocker.join("world.snapshot")).unwrap_err();
        assert!(matches!(err, WorldError::Persist(_)));
    }
}
