//! Domain entities of the simulated lab platform and their invariants.
//!
//! The whole entity graph lives in a [`World`]. Mutations go through
//! [`World::upsert`], which rejects any entity that would break referential
//! integrity; [`World::validate`] checks the full graph and is run on every
//! load.

mod schema;
mod seed;
mod store;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use schema::{describe_field_errors, FieldError, ParameterSchema, PropertySpec, ValueType};
pub use seed::seed_world;
pub use store::{load_world, persist_world, snapshot_path, to_snapshot_text, SNAPSHOT_FILE};

use crate::tools::roster::TOOL_UNIVERSE;

pub const HIGH_STAKES: &str = "high_stakes";
pub const PDF_MIME: &str = "application/pdf";
pub const HPLC_RETENTION_MIN: f64 = 0.2;
pub const HPLC_RETENTION_MAX: f64 = 30.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WorldError {
    #[error("{kind} '{id}' not found")]
    NotFound { kind: EntityKind, id: String },
    #[error("rejected {kind}: {field}: {reason}")]
    Rejected {
        kind: EntityKind,
        field: String,
        reason: String,
    },
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("persistence error: {0}")]
    Persist(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Lab,
    Actor,
    Workflow,
    Job,
    User,
    Document,
    Approval,
}

impl fmt::Display for EntityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            EntityKind::Lab => "lab",
            EntityKind::Actor => "actor",
            EntityKind::Workflow => "workflow",
            EntityKind::Job => "job",
            EntityKind::User => "user",
            EntityKind::Document => "document",
            EntityKind::Approval => "approval",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabStatus {
    Online,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lab {
    pub id: String,
    pub name: String,
    pub site: String,
    pub status: LabStatus,
    pub actor_ids: Vec<String>,
    pub workflow_ids: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorKind {
    Instrument,
    Human,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActorStatus {
    Idle,
    Busy,
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Actor {
    pub id: String,
    pub name: String,
    pub kind: ActorKind,
    pub capabilities: Vec<String>,
    pub status: ActorStatus,
    pub lab_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResultKind {
    Hplc,
    Synthesis,
    Generic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Workflow {
    pub id: String,
    pub name: String,
    pub lab_id: String,
    pub parameter_schema: ParameterSchema,
    /// Virtual seconds.
    pub nominal_duration_s: f64,
    pub flags: BTreeSet<String>,
    pub result_kind: ResultKind,
    /// Capability an actor must list to be assigned to jobs of this workflow.
    pub required_capability: String,
}

impl Workflow {
    pub fn is_high_stakes(&self) -> bool {
        self.flags.contains(HIGH_STAKES)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobState {
    Created,
    Queued,
    Running,
    Completed,
    Failed,
    Cancelled,
}

impl JobState {
    pub const ALL: [JobState; 6] = [
        JobState::Created,
        JobState::Queued,
        JobState::Running,
        JobState::Completed,
        JobState::Failed,
        JobState::Cancelled,
    ];

    /// The job lifecycle. Everything not listed here is illegal.
    pub fn can_transition_to(self, to: JobState) -> bool {
        use JobState::*;
        matches!(
            (self, to),
            (Created, Queued)
                | (Created, Cancelled)
                | (Queued, Running)
                | (Queued, Cancelled)
                | (Running, Completed)
                | (Running, Failed)
                | (Running, Cancelled)
        )
    }

    pub fn is_terminal(self) -> bool {
        matches!(
            self,
            JobState::Completed | JobState::Failed | JobState::Cancelled
        )
    }

    pub fn has_started(self) -> bool {
        matches!(
            self,
            JobState::Running | JobState::Completed | JobState::Failed
        )
    }

    pub fn parse(s: &str) -> Option<JobState> {
        JobState::ALL
            .into_iter()
            .find(|st| st.as_str().eq_ignore_ascii_case(s))
    }

    pub fn as_str(self) -> &'static str {
        match self {
            JobState::Created => "Created",
            JobState::Queued => "Queued",
            JobState::Running => "Running",
            JobState::Completed => "Completed",
            JobState::Failed => "Failed",
            JobState::Cancelled => "Cancelled",
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ResultValue {
    Number(f64),
    Text(String),
}

impl ResultValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            ResultValue::Number(x) => Some(*x),
            ResultValue::Text(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobResult {
    pub kind: ResultKind,
    pub values: BTreeMap<String, ResultValue>,
    pub summary: String,
}

impl JobResult {
    pub fn number(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(ResultValue::as_f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Job {
    pub id: String,
    pub workflow_id: String,
    pub lab_id: String,
    pub creator_user_id: String,
    pub parameters: BTreeMap<String, Value>,
    pub state: JobState,
    pub created_at: f64,
    pub started_at: Option<f64>,
    pub ended_at: Option<f64>,
    pub assigned_actor_ids: Vec<String>,
    pub result: Option<JobResult>,
    pub attachment_ids: Vec<String>,
}

impl Job {
    /// Moves the job to `to`, stamping timestamps. Illegal transitions leave
    /// the job untouched.
    pub fn transition(&mut self, to: JobState, now_s: f64) -> Result<(), JobState> {
        if !self.state.can_transition_to(to) {
            return Err(self.state);
        }
        if to == JobState::Running {
            self.started_at = Some(now_s);
        }
        if to.is_terminal() {
            self.ended_at = Some(now_s);
        }
        // started_at is only kept for states that ran to an outcome.
        if to == JobState::Cancelled {
            self.started_at = None;
        }
        self.state = to;
        Ok(())
    }

    /// Actual run time, for completed jobs.
    pub fn duration_s(&self) -> Option<f64> {
        match (self.started_at, self.ended_at) {
            (Some(s), Some(e)) => Some(e - s),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Scientist,
    Admin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct User {
    pub id: String,
    pub name: String,
    pub role: Role,
    pub permissions: BTreeSet<String>,
}

impl User {
    pub fn may_call(&self, tool: &str) -> bool {
        self.permissions.contains(tool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    pub mime: String,
    #[serde(with = "b64")]
    pub bytes: Vec<u8>,
    pub linked_job_id: Option<String>,
}

mod b64 {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine as _;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ApprovalState {
    Pending,
    Approved,
    Denied,
    Expired,
}

/// A human confirmation request for a suspended high-stakes tool call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApprovalRequest {
    pub id: String,
    pub conversation_id: String,
    pub tool_name: String,
    pub arguments: Value,
    pub requested_at: f64,
    pub state: ApprovalState,
    pub resolver_user_id: Option<String>,
}

impl ApprovalRequest {
    /// `pending` may move to any other state; nothing else moves.
    pub fn resolve(
        &mut self,
        to: ApprovalState,
        resolver: Option<&str>,
    ) -> Result<(), ApprovalState> {
        if self.state != ApprovalState::Pending || to == ApprovalState::Pending {
            return Err(self.state);
        }
        self.state = to;
        self.resolver_user_id = match to {
            ApprovalState::Approved | ApprovalState::Denied => resolver.map(str::to_string),
            _ => None,
        };
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdCounters {
    pub job: u64,
    pub document: u64,
    pub approval: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Entity {
    Lab(Lab),
    Actor(Actor),
    Workflow(Workflow),
    Job(Job),
    User(User),
    Document(Document),
    Approval(ApprovalRequest),
}

impl Entity {
    pub fn kind(&self) -> EntityKind {
        match self {
            Entity::Lab(_) => EntityKind::Lab,
            Entity::Actor(_) => EntityKind::Actor,
            Entity::Workflow(_) => EntityKind::Workflow,
            Entity::Job(_) => EntityKind::Job,
            Entity::User(_) => EntityKind::User,
            Entity::Document(_) => EntityKind::Document,
            Entity::Approval(_) => EntityKind::Approval,
        }
    }
}

/// The complete entity graph plus the virtual clock reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    /// Virtual seconds since world creation.
    pub now_s: f64,
    pub seed: u64,
    pub counters: IdCounters,
    pub labs: BTreeMap<String, Lab>,
    pub actors: BTreeMap<String, Actor>,
    pub workflows: BTreeMap<String, Workflow>,
    pub jobs: BTreeMap<String, Job>,
    pub users: BTreeMap<String, User>,
    pub documents: BTreeMap<String, Document>,
    pub approvals: BTreeMap<String, ApprovalRequest>,
}

fn reject(kind: EntityKind, field: &str, reason: impl Into<String>) -> WorldError {
    WorldError::Rejected {
        kind,
        field: field.to_string(),
        reason: reason.into(),
    }
}

fn not_found(kind: EntityKind, id: &str) -> WorldError {
    WorldError::NotFound {
        kind,
        id: id.to_string(),
    }
}

impl World {
    pub fn empty(seed: u64) -> Self {
        Self {
            now_s: 0.0,
            seed,
            counters: IdCounters::default(),
            labs: BTreeMap::new(),
            actors: BTreeMap::new(),
            workflows: BTreeMap::new(),
            jobs: BTreeMap::new(),
            users: BTreeMap::new(),
            documents: BTreeMap::new(),
            approvals: BTreeMap::new(),
        }
    }

    pub fn lab(&self, id: &str) -> Result<&Lab, WorldError> {
        self.labs
            .get(id)
            .ok_or_else(|| not_found(EntityKind::Lab, id))
    }

    pub fn actor(&self, id: &str) -> Result<&Actor, WorldError> {
        self.actors
            .get(id)
            .ok_or_else(|| not_found(EntityKind::Actor, id))
    }

    pub fn workflow(&self, id: &str) -> Result<&Workflow, WorldError> {
        self.workflows
            .get(id)
            .ok_or_else(|| not_found(EntityKind::Workflow, id))
    }

    pub fn job(&self, id: &str) -> Result<&Job, WorldError> {
        self.jobs
            .get(id)
            .ok_or_else(|| not_found(EntityKind::Job, id))
    }

    pub fn user(&self, id: &str) -> Result<&User, WorldError> {
        self.users
            .get(id)
            .ok_or_else(|| not_found(EntityKind::User, id))
    }

    pub fn document(&self, id: &str) -> Result<&Document, WorldError> {
        self.documents
            .get(id)
            .ok_or_else(|| not_found(EntityKind::Document, id))
    }

    pub fn approval(&self, id: &str) -> Result<&ApprovalRequest, WorldError> {
        self.approvals
            .get(id)
            .ok_or_else(|| not_found(EntityKind::Approval, id))
    }

    pub fn get_entity(&self, kind: EntityKind, id: &str) -> Result<Entity, WorldError> {
        Ok(match kind {
            EntityKind::Lab => Entity::Lab(self.lab(id)?.clone()),
            EntityKind::Actor => Entity::Actor(self.actor(id)?.clone()),
            EntityKind::Workflow => Entity::Workflow(self.workflow(id)?.clone()),
            EntityKind::Job => Entity::Job(self.job(id)?.clone()),
            EntityKind::User => Entity::User(self.user(id)?.clone()),
            EntityKind::Document => Entity::Document(self.document(id)?.clone()),
            EntityKind::Approval => Entity::Approval(self.approval(id)?.clone()),
        })
    }

    pub fn next_job_id(&mut self) -> String {
        self.counters.job += 1;
        format!("j{}", self.counters.job)
    }

    pub fn next_document_id(&mut self) -> String {
        self.counters.document += 1;
        format!("doc{}", self.counters.document)
    }

    pub fn next_approval_id(&mut self) -> String {
        self.counters.approval += 1;
        format!("a{}", self.counters.approval)
    }

    /// Inserts or replaces an entity after checking it against the rest of
    /// the graph. Actor and workflow upserts keep their lab's id lists in
    /// sync.
    pub fn upsert(&mut self, entity: Entity) -> Result<(), WorldError> {
        match entity {
            Entity::Lab(lab) => {
                self.check_lab(&lab)?;
                self.labs.insert(lab.id.clone(), lab);
            }
            Entity::Actor(actor) => {
                self.check_actor(&actor)?;
                if let Some(old) = self.actors.get(&actor.id) {
                    if old.lab_id != actor.lab_id {
                        if let Some(lab) = self.labs.get_mut(&old.lab_id) {
                            lab.actor_ids.retain(|a| a != &actor.id);
                        }
                    }
                }
                let lab = self.labs.get_mut(&actor.lab_id).expect("checked");
                if !lab.actor_ids.contains(&actor.id) {
                    lab.actor_ids.push(actor.id.clone());
                }
                self.actors.insert(actor.id.clone(), actor);
            }
            Entity::Workflow(wf) => {
                self.check_workflow(&wf)?;
                if let Some(old) = self.workflows.get(&wf.id) {
                    if old.lab_id != wf.lab_id {
                        if let Some(lab) = self.labs.get_mut(&old.lab_id) {
                            lab.workflow_ids.retain(|w| w != &wf.id);
                        }
                    }
                }
                let lab = self.labs.get_mut(&wf.lab_id).expect("checked");
                if !lab.workflow_ids.contains(&wf.id) {
                    lab.workflow_ids.push(wf.id.clone());
                }
                self.workflows.insert(wf.id.clone(), wf);
            }
            Entity::Job(job) => {
                self.check_job(&job)?;
                self.jobs.insert(job.id.clone(), job);
            }
            Entity::User(user) => {
                check_user(&user)?;
                self.users.insert(user.id.clone(), user);
            }
            Entity::Document(doc) => {
                self.check_document(&doc)?;
                self.documents.insert(doc.id.clone(), doc);
            }
            Entity::Approval(approval) => {
                check_approval(&approval)?;
                self.approvals.insert(approval.id.clone(), approval);
            }
        }
        Ok(())
    }

    fn check_lab(&self, lab: &Lab) -> Result<(), WorldError> {
        let k = EntityKind::Lab;
        if lab.id.is_empty() {
            return Err(reject(k, "id", "empty"));
        }
        for a in &lab.actor_ids {
            match self.actors.get(a) {
                Some(actor) if actor.lab_id == lab.id => {}
                Some(_) => {
                    return Err(reject(
                        k,
                        "actor_ids",
                        format!("actor {a} belongs elsewhere"),
                    ))
                }
                None => return Err(reject(k, "actor_ids", format!("unresolved actor {a}"))),
            }
        }
        for w in &lab.workflow_ids {
            match self.workflows.get(w) {
                Some(wf) if wf.lab_id == lab.id => {}
                Some(_) => {
                    return Err(reject(
                        k,
                        "workflow_ids",
                        format!("workflow {w} belongs elsewhere"),
                    ))
                }
                None => {
                    return Err(reject(
                        k,
                        "workflow_ids",
                        format!("unresolved workflow {w}"),
                    ))
                }
            }
        }
        // Dropping an id from the list would orphan an actor/workflow that
        // still points at this lab.
        for actor in self.actors.values().filter(|a| a.lab_id == lab.id) {
            if !lab.actor_ids.contains(&actor.id) {
                return Err(reject(
                    k,
                    "actor_ids",
                    format!("missing actor {}", actor.id),
                ));
            }
        }
        for wf in self.workflows.values().filter(|w| w.lab_id == lab.id) {
            if !lab.workflow_ids.contains(&wf.id) {
                return Err(reject(
                    k,
                    "workflow_ids",
                    format!("missing workflow {}", wf.id),
                ));
            }
        }
        Ok(())
    }

    fn check_actor(&self, actor: &Actor) -> Result<(), WorldError> {
        let k = EntityKind::Actor;
        if actor.id.is_empty() {
            return Err(reject(k, "id", "empty"));
        }
        if !self.labs.contains_key(&actor.lab_id) {
            return Err(reject(
                k,
                "lab_id",
                format!("unresolved lab {}", actor.lab_id),
            ));
        }
        let running = self.running_jobs_with(&actor.id);
        match actor.status {
            ActorStatus::Busy if running != 1 => {
                Err(reject(k, "status", "busy requires exactly one running job"))
            }
            ActorStatus::Idle | ActorStatus::Offline if running != 0 => Err(reject(
                k,
                "status",
                "actor assigned to a running job must be busy",
            )),
            _ => Ok(()),
        }
    }

    fn check_workflow(&self, wf: &Workflow) -> Result<(), WorldError> {
        let k = EntityKind::Workflow;
        if wf.id.is_empty() {
            return Err(reject(k, "id", "empty"));
        }
        if !self.labs.contains_key(&wf.lab_id) {
            return Err(reject(k, "lab_id", format!("unresolved lab {}", wf.lab_id)));
        }
        if wf.nominal_duration_s <= 0.0 || !wf.nominal_duration_s.is_finite() {
            return Err(reject(k, "nominal_duration_s", "must be positive"));
        }
        wf.parameter_schema
            .check_well_formed()
            .map_err(|e| reject(k, "parameter_schema", e.to_string()))
    }

    fn check_job(&self, job: &Job) -> Result<(), WorldError> {
        let k = EntityKind::Job;
        if job.id.is_empty() {
            return Err(reject(k, "id", "empty"));
        }
        let wf = self.workflows.get(&job.workflow_id).ok_or_else(|| {
            reject(
                k,
                "workflow_id",
                format!("unresolved workflow_id {}", job.workflow_id),
            )
        })?;
        if job.lab_id != wf.lab_id {
            return Err(reject(k, "lab_id", "does not match the workflow's lab"));
        }
        if !self.users.contains_key(&job.creator_user_id) {
            return Err(reject(k, "creator_user_id", "unresolved user"));
        }
        let params: serde_json::Map<String, Value> = job
            .parameters
            .iter()
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        if let Err(errs) = wf.parameter_schema.validate(&params) {
            return Err(reject(k, "parameters", describe_field_errors(&errs)));
        }
        if job.started_at.is_some() != job.state.has_started() {
            return Err(reject(
                k,
                "started_at",
                format!("inconsistent with state {}", job.state),
            ));
        }
        if job.ended_at.is_some() != job.state.is_terminal() {
            return Err(reject(
                k,
                "ended_at",
                format!("inconsistent with state {}", job.state),
            ));
        }
        if let (Some(s), Some(e)) = (job.started_at, job.ended_at) {
            if e < s {
                return Err(reject(k, "ended_at", "before started_at"));
            }
        }
        if job.started_at.is_some_and(|s| s < job.created_at) {
            return Err(reject(k, "started_at", "before created_at"));
        }
        for a in &job.assigned_actor_ids {
            if !self.actors.contains_key(a) {
                return Err(reject(
                    k,
                    "assigned_actor_ids",
                    format!("unresolved actor {a}"),
                ));
            }
        }
        for d in &job.attachment_ids {
            if !self.documents.contains_key(d) {
                return Err(reject(
                    k,
                    "attachment_ids",
                    format!("unresolved document {d}"),
                ));
            }
        }
        if let Some(result) = &job.result {
            check_result(result).map_err(|reason| reject(k, "result", reason))?;
        }
        Ok(())
    }

    fn check_document(&self, doc: &Document) -> Result<(), WorldError> {
        let k = EntityKind::Document;
        if doc.bytes.is_empty() {
            return Err(reject(k, "bytes", "empty payload"));
        }
        if let Some(job) = &doc.linked_job_id {
            if !self.jobs.contains_key(job) {
                return Err(reject(k, "linked_job_id", format!("unresolved job {job}")));
            }
            if doc.mime != PDF_MIME {
                return Err(reject(
                    k,
                    "mime",
                    "attached reports must be application/pdf",
                ));
            }
        }
        Ok(())
    }

    fn running_jobs_with(&self, actor_id: &str) -> usize {
        self.jobs
            .values()
            .filter(|j| {
                j.state == JobState::Running && j.assigned_actor_ids.iter().any(|a| a == actor_id)
            })
            .count()
    }

    /// Full-graph check. The error names the first violated invariant.
    pub fn validate(&self) -> Result<(), WorldError> {
        let inv = |msg: String| WorldError::Invariant(msg);
        for (key, lab) in &self.labs {
            if key != &lab.id {
                return Err(inv(format!("lab key {key} != id {}", lab.id)));
            }
            self.check_lab(lab).map_err(|e| inv(e.to_string()))?;
        }
        for (key, actor) in &self.actors {
            if key != &actor.id {
                return Err(inv(format!("actor key {key} != id {}", actor.id)));
            }
            self.check_actor(actor).map_err(|e| inv(e.to_string()))?;
            let listed = self
                .labs
                .get(&actor.lab_id)
                .is_some_and(|l| l.actor_ids.contains(&actor.id));
            if !listed {
                return Err(inv(format!("actor {} missing from its lab", actor.id)));
            }
        }
        for (key, wf) in &self.workflows {
            if key != &wf.id {
                return Err(inv(format!("workflow key {key} != id {}", wf.id)));
            }
            self.check_workflow(wf).map_err(|e| inv(e.to_string()))?;
        }
        for (key, user) in &self.users {
            if key != &user.id {
                return Err(inv(format!("user key {key} != id {}", user.id)));
            }
            check_user(user).map_err(|e| inv(e.to_string()))?;
        }
        for (key, job) in &self.jobs {
            if key != &job.id {
                return Err(inv(format!("job key {key} != id {}", job.id)));
            }
            self.check_job(job).map_err(|e| match e {
                WorldError::Rejected { field, reason, .. } if field == "workflow_id" => inv(
                    format!("unresolved workflow_id in job {}: {reason}", job.id),
                ),
                other => inv(format!("job {}: {other}", job.id)),
            })?;
        }
        for (key, doc) in &self.documents {
            if key != &doc.id {
                return Err(inv(format!("document key {key} != id {}", doc.id)));
            }
            self.check_document(doc).map_err(|e| inv(e.to_string()))?;
        }
        for (key, approval) in &self.approvals {
            if key != &approval.id {
                return Err(inv(format!("approval key {key} != id {}", approval.id)));
            }
            check_approval(approval).map_err(|e| inv(e.to_string()))?;
        }
        if self.now_s.is_nan() || self.now_s < 0.0 {
            return Err(inv("clock reading negative".into()));
        }
        Ok(())
    }
}

fn check_user(user: &User) -> Result<(), WorldError> {
    if user.id.is_empty() {
        return Err(reject(EntityKind::User, "id", "empty"));
    }
    if let Some(p) = user
        .permissions
        .iter()
        .find(|p| !TOOL_UNIVERSE.contains(&p.as_str()))
    {
        return Err(reject(
            EntityKind::User,
            "permissions",
            format!("unknown tool {p}"),
        ));
    }
    Ok(())
}

fn check_approval(a: &ApprovalRequest) -> Result<(), WorldError> {
    let resolved = matches!(a.state, ApprovalState::Approved | ApprovalState::Denied);
    if resolved != a.resolver_user_id.is_some() {
        return Err(reject(
            EntityKind::Approval,
            "resolver_user_id",
            "present iff approved or denied",
        ));
    }
    Ok(())
}

fn check_result(result: &JobResult) -> Result<(), String> {
    if result.kind == ResultKind::Hplc {
        let rt = result
            .number("retention_time_min")
            .ok_or("hplc result without retention_time_min")?;
        if !(HPLC_RETENTION_MIN..=HPLC_RETENTION_MAX).contains(&rt) {
            return Err(format!("retention_time_min {rt} out of range"));
        }
    }
    Ok(())
}
