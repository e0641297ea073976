//! Shared access to one [`Engine`]: commands run one at a time under a lock,
//! the world is persisted after each command, and listeners see every
//! emitted event in emission order.

use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard};

use super::{Engine, JobError, JobEvent};
use crate::lab_model::persist_world;

pub type Listener = Box<dyn Fn(&JobEvent) + Send + Sync>;

struct Shared {
    engine: Mutex<Engine>,
    listeners: Mutex<Vec<Listener>>,
    snapshot: Option<PathBuf>,
}

/// Cheap to clone; all clones drive the same engine.
#[derive(Clone)]
pub struct EngineHandle {
    shared: Arc<Shared>,
}

impl EngineHandle {
    pub fn new(engine: Engine) -> Self {
        Self::build(engine, None)
    }

    /// Persists the world to `path` after every successful command.
    pub fn with_snapshot(engine: Engine, path: PathBuf) -> Self {
        Self::build(engine, Some(path))
    }

    fn build(engine: Engine, snapshot: Option<PathBuf>) -> Self {
        Self {
            shared: Arc::new(Shared {
                engine: Mutex::new(engine),
                listeners: Mutex::new(Vec::new()),
                snapshot,
            }),
        }
    }

    fn lock(&self) -> MutexGuard<'_, Engine> {
        // A panicking command leaves the engine in its last consistent
        // state because every mutation is applied only after validation.
        self.shared.engine.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn subscribe(&self, listener: Listener) {
        self.shared
            .listeners
            .lock()
            .unwrap_or_else(|p| p.into_inner())
            .push(listener);
    }

    /// Runs a mutating command. Listeners are notified while the engine lock
    /// is still held so that concurrent commands cannot interleave their
    /// event sequences.
    pub fn command<T>(
        &self,
        f: impl FnOnce(&mut Engine) -> Result<(T, Vec<JobEvent>), JobError>,
    ) -> Result<T, JobError> {
        let mut engine = self.lock();
        let (value, events) = f(&mut engine)?;
        if let Some(path) = &self.shared.snapshot {
            persist_world(engine.world(), path)?;
        }
        let listeners = self
            .shared
            .listeners
            .lock()
            .unwrap_or_else(|p| p.into_inner());
        for event in &events {
            for l in listeners.iter() {
                l(event);
            }
        }
        Ok(value)
    }

    pub fn read<T>(&self, f: impl FnOnce(&Engine) -> T) -> T {
        f(&self.lock())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab_model::{load_world, seed_world, JobState};
    use serde_json::{json, Map, Value};
    use std::sync::Mutex as StdMutex;

    fn params(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    #[test]
    fn listeners_see_events_in_order() {
        let h = EngineHandle::new(Engine::new(seed_world(7)));
        let seen = Arc::new(StdMutex::new(Vec::new()));
        let sink = seen.clone();
        h.subscribe(Box::new(move |e| {
            sink.lock().unwrap().push(e.state.unwrap())
        }));
        let job = h
            .command(|e| e.create_job("plate_prep", params(json!({"plate_format": "96"})), "u1"))
            .unwrap();
        h.command(|e| e.start_job(&job.id)).unwrap();
        h.command(|e| e.tick(10_000.0).map(|ev| ((), ev))).unwrap();
        assert_eq!(
            *seen.lock().unwrap(),
            [
                JobState::Created,
                JobState::Queued,
                JobState::Running,
                JobState::Completed
            ]
        );
    }

    #[test]
    fn snapshot_written_after_commands() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("world.snapshot");
        let h = EngineHandle::with_snapshot(Engine::new(seed_world(7)), path.clone());
        let job = h
            .command(|e| e.create_job("plate_prep", params(json!({"plate_format": "96"})), "u1"))
            .unwrap();
        let reloaded = load_world(&path, 7).unwrap();
        assert_eq!(reloaded.jobs[&job.id].state, JobState::Created);
    }

    #[test]
    fn failed_command_notifies_nobody() {
        let h = EngineHandle::new(Engine::new(seed_world(7)));
        let count = Arc::new(StdMutex::new(0));
        let c = count.clone();
        h.subscribe(Box::new(move |_| *c.lock().unwrap() += 1));
        assert!(h.command(|e| e.start_job("job-missing")).is_err());
        assert_eq!(*count.lock().unwrap(), 0);
    }
}
