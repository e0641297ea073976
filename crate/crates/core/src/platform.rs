//! One running installation: engine, tool servers, agent runtime, memory,
//! tracing, config lineage and the event bus, with optional persistence
//! under a data directory.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use serde::Serialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::agent::{
    ApprovalDecision, ConversationState, Host, Runtime, RuntimeBuildError, TurnError, TurnOutcome,
    TurnResult,
};
use crate::config::PlatformConfig;
use crate::job_engine::{approval_state_str, Engine, EngineHandle, JobError, JobEvent};
use crate::lab_model::{
    load_world, seed_world, snapshot_path, ApprovalRequest, ApprovalState, JobState,
    Role as UserRole, WorldError,
};
use crate::mcp::client::{ClientError, InProcess, McpClient, ToolRouter};
use crate::mcp::server::McpServer;
use crate::model::{MemoryError, MemoryStore, ModelAdapter, RemoteModel};
use crate::observability::{Lineage, LineageError, TraceError, Tracer, LINEAGE_FILE, TRACE_FILE};
use crate::tools::lab_server::build_lab_server;
use crate::tools::molecule_server::{build_main_server, build_molecule_server};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const MEMORY_FILE: &str = "memory.jsonl";
pub const CONVERSATIONS_DIR: &str = "conversations";
pub const DEFAULT_SEED: u64 = 42;

/// Something subscribers of the live event stream receive. `event` is the
/// stream event name: `job_state`, `turn` or `approval`; `data` is one line
/// of compact JSON, for job events exactly the line in `events.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BusEvent {
    pub event: String,
    pub data: String,
}

impl BusEvent {
    pub fn json(&self) -> Value {
        serde_json::from_str(&self.data).expect("bus data is JSON")
    }
}

pub type BusListener = Box<dyn Fn(&BusEvent) + Send + Sync>;

#[derive(Default)]
struct BusInner {
    log: Option<File>,
    listeners: Vec<BusListener>,
}

/// Fan-out of job events (also appended to `events.jsonl`) and platform
/// notices. Writing and notifying happen under one lock so every listener
/// sees job events in file order.
#[derive(Default)]
pub struct EventBus {
    inner: Mutex<BusInner>,
}

impl EventBus {
    fn lock(&self) -> MutexGuard<'_, BusInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn subscribe(&self, listener: BusListener) {
        self.lock().listeners.push(listener);
    }

    fn job_event(&self, e: &JobEvent) {
        let mut inner = self.lock();
        let line = serde_json::to_string(e).expect("event serializes");
        if let Some(f) = inner.log.as_mut() {
            // The world snapshot stays authoritative; a failed log append
            // is reported but does not undo the state change.
            if let Err(err) = writeln!(f, "{line}") {
                eprintln!("events log: {err}");
            }
        }
        let ev = BusEvent {
            event: "job_state".into(),
            data: line,
        };
        inner.listeners.iter().for_each(|l| l(&ev));
    }

    pub fn publish(&self, event: &str, data: Value) {
        let ev = BusEvent {
            event: event.into(),
            data: data.to_string(),
        };
        self.lock().listeners.iter().for_each(|l| l(&ev));
    }
}

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("conversation {0} is busy with another turn")]
    Busy(String),
    #[error("message text is empty")]
    EmptyText,
    #[error("unknown user '{0}'")]
    UnknownUser(String),
    #[error("user '{user}' may not {action}")]
    Forbidden { user: String, action: String },
    #[error("{0} not found")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error(transparent)]
    Turn(#[from] TurnError),
    #[error(transparent)]
    Job(JobError),
    #[error("storage: {0}")]
    Storage(String),
    #[error("startup: {0}")]
    Startup(String),
}

impl From<JobError> for PlatformError {
    fn from(e: JobError) -> Self {
        match e {
            JobError::World(WorldError::NotFound { kind, id }) => {
                PlatformError::NotFound(format!("{kind:?} {id}").to_lowercase())
            }
            other => PlatformError::Job(other),
        }
    }
}

macro_rules! storage_from {
    ($($t:ty),*) => {$(
        impl From<$t> for PlatformError {
            fn from(e: $t) -> Self {
                PlatformError::Storage(e.to_string())
            }
        }
    )*};
}
storage_from!(
    std::io::Error,
    MemoryError,
    TraceError,
    LineageError,
    WorldError
);

impl From<RuntimeBuildError> for PlatformError {
    fn from(e: RuntimeBuildError) -> Self {
        PlatformError::Startup(e.to_string())
    }
}

impl From<ClientError> for PlatformError {
    fn from(e: ClientError) -> Self {
        PlatformError::Startup(e.to_string())
    }
}

/// The answer to a chat or an approval resolution.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatResponse {
    pub conversation_id: String,
    pub turn_id: String,
    /// `ok`, `blocked` or `pending_approval`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reply_text: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub approval_id: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Resolution {
    pub approval: ApprovalRequest,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub turn: Option<ChatResponse>,
}

/// Which model backs the agents.
pub enum ModelChoice {
    Scripted,
    Remote {
        base_url: String,
        model: String,
        api_key: Option<String>,
    },
    Custom(Arc<dyn ModelAdapter>),
}

impl ModelChoice {
    /// Reads `TIPPY_MODEL_MODE` (`scripted` or `remote`),
    /// `TIPPY_MODEL_BASE_URL`, `TIPPY_MODEL_NAME` and `TIPPY_MODEL_API_KEY`.
    pub fn from_env() -> Result<Self, PlatformError> {
        match std::env::var("TIPPY_MODEL_MODE")
            .unwrap_or_else(|_| "scripted".into())
            .as_str()
        {
            "scripted" => Ok(ModelChoice::Scripted),
            "remote" => Ok(ModelChoice::Remote {
                base_url: std::env::var("TIPPY_MODEL_BASE_URL").map_err(|_| {
                    PlatformError::Startup("TIPPY_MODEL_BASE_URL is required in remote mode".into())
                })?,
                model: std::env::var("TIPPY_MODEL_NAME").unwrap_or_else(|_| "default".into()),
                api_key: std::env::var("TIPPY_MODEL_API_KEY")
                    .ok()
                    .filter(|k| !k.is_empty()),
            }),
            other => Err(PlatformError::Startup(format!(
                "unknown TIPPY_MODEL_MODE '{other}'"
            ))),
        }
    }
}

pub struct PlatformOptions {
    pub data_dir: Option<PathBuf>,
    pub config: PlatformConfig,
    pub seed: u64,
    pub model: ModelChoice,
}

impl Default for PlatformOptions {
    fn default() -> Self {
        Self {
            data_dir: None,
            config: PlatformConfig::bundled(),
            seed: DEFAULT_SEED,
            model: ModelChoice::Scripted,
        }
    }
}

type Conversation = Arc<Mutex<ConversationState>>;

pub struct Platform {
    config: PlatformConfig,
    engine: EngineHandle,
    runtime: Runtime,
    memory: Arc<MemoryStore>,
    lineage: Mutex<Lineage>,
    bus: Arc<EventBus>,
    conversations: Mutex<BTreeMap<String, Conversation>>,
    next_conversation: AtomicU64,
    data_dir: Option<PathBuf>,
    main_server: Arc<McpServer>,
    lab_server: Arc<McpServer>,
    molecule_server: Arc<McpServer>,
}

/// The runtime's view of the platform during a turn.
struct PlatformHost<'a> {
    platform: &'a Platform,
}

impl Host for PlatformHost<'_> {
    fn now_s(&self) -> f64 {
        self.platform.engine.read(Engine::now_s)
    }

    fn known_entities(&self) -> Vec<String> {
        let mut out: Vec<String> = self.platform.engine.read(|e| {
            let w = e.world();
            let mut v = Vec::new();
            v.extend(w.labs.values().flat_map(|l| [l.id.clone(), l.name.clone()]));
            v.extend(
                w.actors
                    .values()
                    .flat_map(|a| [a.id.clone(), a.name.clone()]),
            );
            v.extend(
                w.workflows
                    .values()
                    .flat_map(|f| [f.id.clone(), f.name.clone()]),
            );
            v.extend(
                w.users
                    .values()
                    .flat_map(|u| [u.id.clone(), u.name.clone()]),
            );
            v.extend(w.jobs.keys().cloned());
            v.extend(w.documents.keys().cloned());
            v
        });
        out.extend(self.platform.conversation_ids());
        out
    }

    fn needs_approval(&self, tool: &str, arguments: &Map<String, Value>) -> bool {
        if tool != "start_job" {
            return false;
        }
        let Some(job_id) = arguments.get("job_id").and_then(Value::as_str) else {
            return false;
        };
        self.platform
            .engine
            .read(|e| e.requires_approval(job_id).unwrap_or(false) && !e.has_start_approval(job_id))
    }

    fn request_approval(
        &self,
        conversation_id: &str,
        tool: &str,
        arguments: &Map<String, Value>,
    ) -> Result<String, String> {
        let req = self
            .platform
            .engine
            .command(|e| {
                Ok((
                    e.create_approval(conversation_id, tool, Value::Object(arguments.clone())),
                    Vec::new(),
                ))
            })
            .map_err(|e| e.to_string())?;
        self.platform.bus.publish("approval", approval_notice(&req));
        Ok(req.id)
    }
}

fn approval_notice(a: &ApprovalRequest) -> Value {
    json!({
        "approval_id": a.id,
        "conversation_id": a.conversation_id,
        "tool_name": a.tool_name,
        "state": approval_state_str(a.state),
    })
}

fn connect(server: &Arc<McpServer>) -> Result<McpClient, ClientError> {
    McpClient::connect(Box::new(InProcess::new(server.clone())))
}

impl Platform {
    pub fn open(opts: PlatformOptions) -> Result<Self, PlatformError> {
        let PlatformOptions {
            data_dir,
            config,
            seed,
            model,
        } = opts;
        if let Some(dir) = &data_dir {
            std::fs::create_dir_all(dir.join(CONVERSATIONS_DIR))?;
        }
        let world = match &data_dir {
            Some(dir) => load_world(&snapshot_path(dir), seed)?,
            None => seed_world(seed),
        };
        let engine = Engine::with_constants(world, config.engine_constants());
        let engine = match &data_dir {
            Some(dir) => EngineHandle::with_snapshot(engine, snapshot_path(dir)),
            None => EngineHandle::new(engine),
        };

        let bus = Arc::new(EventBus::default());
        if let Some(dir) = &data_dir {
            bus.lock().log = Some(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(dir.join(EVENTS_FILE))?,
            );
        }
        let sink = bus.clone();
        engine.subscribe(Box::new(move |e| sink.job_event(e)));

        let (tracer, memory, mut lineage) = match &data_dir {
            Some(dir) => (
                Tracer::open(&dir.join(TRACE_FILE))?,
                MemoryStore::open(&dir.join(MEMORY_FILE))?,
                Lineage::open(&dir.join(LINEAGE_FILE))?,
            ),
            None => (
                Tracer::in_memory(),
                MemoryStore::in_memory(),
                Lineage::in_memory(),
            ),
        };
        let now = engine.read(Engine::now_s);
        lineage.snapshot_payload(&config.payload(), now)?;

        let lab_server = Arc::new(build_lab_server(engine.clone()));
        let molecule_server = Arc::new(build_molecule_server(Some(engine.clone())));
        let main_server = Arc::new(build_main_server(engine.clone()));
        let mut router = ToolRouter::new();
        router.attach(connect(&lab_server)?)?;
        router.attach(connect(&molecule_server)?)?;

        let model: Arc<dyn ModelAdapter> = match model {
            ModelChoice::Scripted => Arc::new(config.scripted_model()),
            ModelChoice::Remote {
                base_url,
                model,
                api_key,
            } => Arc::new(RemoteModel::new(&base_url, &model, api_key)),
            ModelChoice::Custom(m) => m,
        };
        let memory = Arc::new(memory);
        let runtime = Runtime::new(
            config.profiles(),
            model,
            config.guardrail(),
            router,
            config.limits(),
            Some(memory.clone()),
            Arc::new(tracer),
        )?;

        let mut conversations = BTreeMap::new();
        if let Some(dir) = &data_dir {
            for entry in std::fs::read_dir(dir.join(CONVERSATIONS_DIR))? {
                let path = entry?.path();
                if path.extension().is_some_and(|e| e == "json") {
                    let state: ConversationState =
                        serde_json::from_str(&std::fs::read_to_string(&path)?).map_err(|e| {
                            PlatformError::Storage(format!("{}: {e}", path.display()))
                        })?;
                    conversations
                        .insert(state.conversation_id.clone(), Arc::new(Mutex::new(state)));
                }
            }
        }
        let next = conversations.len() as u64;
        Ok(Self {
            config,
            engine,
            runtime,
            memory,
            lineage: Mutex::new(lineage),
            bus,
            conversations: Mutex::new(conversations),
            next_conversation: AtomicU64::new(next),
            data_dir,
            main_server,
            lab_server,
            molecule_server,
        })
    }

    pub fn in_memory() -> Self {
        Self::open(PlatformOptions::default()).expect("in-memory platform starts")
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn engine(&self) -> &EngineHandle {
        &self.engine
    }

    pub fn runtime(&self) -> &Runtime {
        &self.runtime
    }

    pub fn tracer(&self) -> &Arc<Tracer> {
        self.runtime.tracer()
    }

    pub fn memory(&self) -> &Arc<MemoryStore> {
        &self.memory
    }

    pub fn bus(&self) -> &Arc<EventBus> {
        &self.bus
    }

    pub fn data_dir(&self) -> Option<&Path> {
        self.data_dir.as_deref()
    }

    pub fn lineage(&self) -> MutexGuard<'_, Lineage> {
        self.lineage.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// The server mounted at `/mcp`: all 18 tools.
    pub fn main_server(&self) -> &Arc<McpServer> {
        &self.main_server
    }

    pub fn lab_server(&self) -> &Arc<McpServer> {
        &self.lab_server
    }

    pub fn molecule_server(&self) -> &Arc<McpServer> {
        &self.molecule_server
    }

    pub fn now_s(&self) -> f64 {
        self.engine.read(Engine::now_s)
    }

    fn conversations(&self) -> MutexGuard<'_, BTreeMap<String, Conversation>> {
        self.conversations.lock().unwrap_or_else(|p| p.into_inner())
    }

    pub fn conversation_ids(&self) -> Vec<String> {
        self.conversations().keys().cloned().collect()
    }

    pub fn conversation(&self, id: &str) -> Option<ConversationState> {
        let conv = self.conversations().get(id).cloned()?;
        let state = conv.lock().unwrap_or_else(|p| p.into_inner()).clone();
        Some(state)
    }

    fn get_or_create(&self, id: Option<&str>) -> (String, Conversation) {
        let mut convs = self.conversations();
        let id = match id {
            Some(id) => id.to_string(),
            None => loop {
                let n = self.next_conversation.fetch_add(1, Ordering::SeqCst) + 1;
                let id = format!("conv-{n:04}");
                if !convs.contains_key(&id) {
                    break id;
                }
            },
        };
        let conv = convs
            .entry(id.clone())
            .or_insert_with(|| Arc::new(Mutex::new(self.runtime.new_conversation(&id))))
            .clone();
        (id, conv)
    }

    fn persist_conversation(&self, state: &ConversationState) -> Result<(), PlatformError> {
        if let Some(dir) = &self.data_dir {
            let path = dir
                .join(CONVERSATIONS_DIR)
                .join(format!("{}.json", state.conversation_id));
            let text = serde_json::to_string_pretty(state).expect("state serializes");
            let mut tmp = tempfile::NamedTempFile::new_in(dir.join(CONVERSATIONS_DIR))?;
            tmp.write_all(text.as_bytes())?;
            tmp.persist(path).map_err(|e| e.error)?;
        }
        Ok(())
    }

    fn finish_turn(
        &self,
        state: &ConversationState,
        result: TurnResult,
    ) -> Result<ChatResponse, PlatformError> {
        self.persist_conversation(state)?;
        let mut resp = ChatResponse {
            conversation_id: state.conversation_id.clone(),
            turn_id: result.turn_id,
            status: String::new(),
            reply_text: None,
            agent: None,
            approval_id: None,
            category: None,
        };
        match result.outcome {
            Ok(TurnOutcome::Reply { text, agent }) => {
                resp.status = "ok".into();
                resp.reply_text = Some(text);
                resp.agent = Some(agent);
            }
            Ok(TurnOutcome::Blocked { category, text }) => {
                resp.status = "blocked".into();
                resp.reply_text = Some(text);
                resp.category = Some(category.as_str().into());
            }
            Ok(TurnOutcome::PendingApproval { approval_id, .. }) => {
                resp.status = "pending_approval".into();
                resp.approval_id = Some(approval_id);
            }
            Err(e) => {
                self.bus.publish(
                    "turn",
                    json!({"conversation_id": resp.conversation_id, "turn_id": resp.turn_id, "status": "error", "error": e.to_string()}),
                );
                return Err(e.into());
            }
        }
        self.bus.publish(
            "turn",
            json!({
                "conversation_id": resp.conversation_id,
                "turn_id": resp.turn_id,
                "status": resp.status,
                "agent": resp.agent,
            }),
        );
        Ok(resp)
    }

    fn check_user(&self, user_id: &str) -> Result<UserRole, PlatformError> {
        self.engine
            .read(|e| e.world().users.get(user_id).map(|u| u.role))
            .ok_or_else(|| PlatformError::UnknownUser(user_id.to_string()))
    }

    /// Runs one turn. A missing conversation id starts a new conversation.
    pub fn chat(
        &self,
        conversation_id: Option<&str>,
        user_id: &str,
        text: &str,
    ) -> Result<ChatResponse, PlatformError> {
        if text.trim().is_empty() {
            return Err(PlatformError::EmptyText);
        }
        self.check_user(user_id)?;
        let (id, conv) = self.get_or_create(conversation_id);
        let mut state = match conv.try_lock() {
            Ok(g) => g,
            Err(std::sync::TryLockError::WouldBlock) => return Err(PlatformError::Busy(id)),
            Err(std::sync::TryLockError::Poisoned(p)) => p.into_inner(),
        };
        let host = PlatformHost { platform: self };
        let result = self.runtime.run_turn(&host, &mut state, user_id, text);
        self.finish_turn(&state, result)
    }

    /// Approves or denies a pending request and resumes its conversation.
    pub fn resolve_approval(
        &self,
        approval_id: &str,
        approve: bool,
        user_id: &str,
    ) -> Result<Resolution, PlatformError> {
        let role = self.check_user(user_id)?;
        let tool = self
            .engine
            .read(|e| e.world().approval(approval_id).map(|a| a.tool_name.clone()))?;
        let may = self.engine.read(|e| {
            e.world()
                .users
                .get(user_id)
                .is_some_and(|u| u.may_call(&tool))
        });
        if !matches!(role, UserRole::Scientist | UserRole::Admin) || !may {
            return Err(PlatformError::Forbidden {
                user: user_id.to_string(),
                action: format!("resolve approvals for {tool}"),
            });
        }
        let (outcome, expired) = self.engine.command(|e| {
            let expired = e.expire_approvals();
            let current = e.world().approval(approval_id)?.clone();
            let outcome = if current.state == ApprovalState::Pending {
                Ok(e.resolve_approval(approval_id, approve, user_id)?)
            } else {
                Err(current.state)
            };
            Ok(((outcome, expired), Vec::new()))
        })?;
        self.resume_expired(&expired)?;
        let approval = outcome.map_err(|s| {
            PlatformError::Conflict(format!(
                "approval {approval_id} is already {}",
                approval_state_str(s)
            ))
        })?;
        self.bus.publish("approval", approval_notice(&approval));
        let decision = if approve {
            ApprovalDecision::Approved
        } else {
            ApprovalDecision::Denied
        };
        let turn = self.resume(&approval, decision)?;
        Ok(Resolution { approval, turn })
    }

    fn resume(
        &self,
        approval: &ApprovalRequest,
        decision: ApprovalDecision,
    ) -> Result<Option<ChatResponse>, PlatformError> {
        let Some(conv) = self.conversations().get(&approval.conversation_id).cloned() else {
            return Ok(None);
        };
        let mut state = conv.lock().unwrap_or_else(|p| p.into_inner());
        if state.pending.as_ref().map(|p| p.approval_id.as_str()) != Some(approval.id.as_str()) {
            return Ok(None);
        }
        let host = PlatformHost { platform: self };
        let result = self.runtime.resume(&host, &mut state, decision);
        self.finish_turn(&state, result).map(Some)
    }

    fn resume_expired(&self, expired: &[ApprovalRequest]) -> Result<(), PlatformError> {
        for a in expired {
            self.bus.publish("approval", approval_notice(a));
            self.resume(a, ApprovalDecision::Expired)?;
        }
        Ok(())
    }

    /// Advances virtual time, expires stale approvals (resuming their
    /// conversations as denials) and records completed jobs in memory.
    pub fn tick(&self, dt_s: f64) -> Result<Vec<JobEvent>, PlatformError> {
        let (events, expired) = self.engine.command(|e| {
            let events = e.tick(dt_s)?;
            let expired = e.expire_approvals();
            Ok(((events.clone(), expired), events))
        })?;
        for ev in events
            .iter()
            .filter(|ev| ev.state == Some(JobState::Completed))
        {
            let line = self.engine.read(|e| {
                e.world().job(&ev.job_id).ok().and_then(|j| {
                    j.result.as_ref().map(|r| {
                        format!("Job {} ({}) completed: {}", j.id, j.workflow_id, r.summary)
                    })
                })
            });
            if let Some(line) = line {
                let meta = [
                    ("kind", json!("job_summary")),
                    ("job_id", json!(ev.job_id)),
                    ("at_s", json!(ev.at_s)),
                ]
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect();
                self.memory.add(&line, meta)?;
            }
        }
        self.resume_expired(&expired)?;
        Ok(events)
    }

    pub fn approvals(&self, state: Option<ApprovalState>) -> Vec<ApprovalRequest> {
        self.engine.read(|e| {
            e.world()
                .approvals
                .values()
                .filter(|a| state.is_none_or(|s| a.state == s))
                .cloned()
                .collect()
        })
    }
}
