//! Job lifecycle over a virtual clock.
//!
//! The [`Engine`] owns the [`World`] and is driven by commands (`create_job`,
//! `start_job`, `cancel_job`, `tick`, ...). Every state change appends a
//! [`JobEvent`] to the in-memory log and is returned to the caller so it can
//! be persisted or broadcast. All stochastic draws are keyed by
//! `(world.seed, job_id)`, so identical command sequences give identical logs.

mod handle;
mod simulate;
mod stats;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::lab_model::{
    describe_field_errors, ActorStatus, ApprovalRequest, ApprovalState, Document, EntityKind,
    FieldError, Job, JobResult, JobState, ResultKind, World, WorldError, PDF_MIME,
};
use crate::util::keyed_unit;

pub use handle::{EngineHandle, Listener};
pub use simulate::{simulate_hplc, simulate_hplc_with_noise, HplcInput, HPLC_NOISE};
pub use stats::{duration_stats, DurationStats};

/// Default completion jitter: ±10% of the nominal duration.
pub const JITTER_FRACTION: f64 = 0.1;
/// Approvals older than this many virtual seconds expire.
pub const APPROVAL_TTL_S: f64 = 300.0;
pub const DEFAULT_QUERY_LIMIT: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EngineConstants {
    pub jitter_fraction: f64,
    pub hplc_noise: f64,
    pub approval_ttl_s: f64,
}

impl Default for EngineConstants {
    fn default() -> Self {
        Self {
            jitter_fraction: JITTER_FRACTION,
            hplc_noise: HPLC_NOISE,
            approval_ttl_s: APPROVAL_TTL_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum JobError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error("invalid parameters: {}", describe_field_errors(.0))]
    Validation(Vec<FieldError>),
    #[error("user '{user_id}' lacks permission for {tool}")]
    Permission { user_id: String, tool: String },
    #[error("illegal transition from state {0}")]
    IllegalTransition(JobState),
    #[error("job {0} runs a high-stakes workflow and needs an approved request first")]
    ApprovalRequired(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no completed jobs for workflow '{0}'")]
    NoData(String),
}

impl JobError {
    fn not_found(kind: EntityKind, id: &str) -> Self {
        JobError::World(WorldError::NotFound {
            kind,
            id: id.to_string(),
        })
    }
}

/// One line of the job event log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobEvent {
    pub at_s: f64,
    pub kind: String,
    pub job_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<JobState>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl JobEvent {
    fn state(at_s: f64, job_id: &str, state: JobState, detail: Option<String>) -> Self {
        Self {
            at_s,
            kind: "job_state".into(),
            job_id: job_id.to_string(),
            state: Some(state),
            detail,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JobStatus {
    pub job_id: String,
    pub workflow_id: String,
    pub state: JobState,
    pub created_at: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub started_at: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ended_at: Option<f64>,
    pub assigned_actor_ids: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub result: Option<JobResult>,
    pub attachment_ids: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JobFilter {
    pub lab_id: Option<String>,
    pub workflow_id: Option<String>,
    pub state: Option<JobState>,
    pub created_after: Option<f64>,
    pub created_before: Option<f64>,
    pub limit: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct Engine {
    world: World,
    constants: EngineConstants,
    log: Vec<JobEvent>,
}

impl Engine {
    pub fn new(world: World) -> Self {
        Self::with_constants(world, EngineConstants::default())
    }

    pub fn with_constants(world: World, constants: EngineConstants) -> Self {
        Self {
            world,
            constants,
            log: Vec::new(),
        }
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn now_s(&self) -> f64 {
        self.world.now_s
    }

    pub fn constants(&self) -> EngineConstants {
        self.constants
    }

    /// Every event emitted since the engine was built.
    pub fn log(&self) -> &[JobEvent] {
        &self.log
    }

    fn emit(&mut self, events: &mut Vec<JobEvent>, event: JobEvent) {
        self.log.push(event.clone());
        events.push(event);
    }

    pub fn create_job(
        &mut self,
        workflow_id: &str,
        parameters: Map<String, Value>,
        user_id: &str,
    ) -> Result<(Job, Vec<JobEvent>), JobError> {
        let user = self.world.user(user_id)?;
        if !user.may_call("create_job") {
            return Err(JobError::Permission {
                user_id: user_id.to_string(),
                tool: "create_job".into(),
            });
        }
        let wf = self.world.workflow(workflow_id)?;
        wf.parameter_schema
            .validate(&parameters)
            .map_err(JobError::Validation)?;
        let lab_id = wf.lab_id.clone();
        let id = self.world.next_job_id();
        let job = Job {
            id: id.clone(),
            workflow_id: workflow_id.to_string(),
            lab_id,
            creator_user_id: user_id.to_string(),
            parameters: parameters.into_iter().collect(),
            state: JobState::Created,
            created_at: self.world.now_s,
            started_at: None,
            ended_at: None,
            assigned_actor_ids: vec![],
            result: None,
            attachment_ids: vec![],
        };
        self.world
            .upsert(crate::lab_model::Entity::Job(job.clone()))?;
        let mut events = Vec::new();
        let now = self.world.now_s;
        self.emit(
            &mut events,
            JobEvent::state(now, &id, JobState::Created, None),
        );
        Ok((job, events))
    }

    /// Whether an approved `start_job` request exists for `job_id`.
    pub fn has_start_approval(&self, job_id: &str) -> bool {
        self.world.approvals.values().any(|a| {
            a.tool_name == "start_job"
                && a.state == ApprovalState::Approved
                && a.arguments.get("job_id").and_then(Value::as_str) == Some(job_id)
        })
    }

    pub fn requires_approval(&self, job_id: &str) -> Result<bool, JobError> {
        let job = self.world.job(job_id)?;
        Ok(self.world.workflow(&job.workflow_id)?.is_high_stakes())
    }

    /// Queues a Created job and immediately dispatches it if a capable actor
    /// is idle.
    pub fn start_job(&mut self, job_id: &str) -> Result<(Job, Vec<JobEvent>), JobError> {
        let job = self.world.job(job_id)?;
        if job.state != JobState::Created {
            return Err(JobError::IllegalTransition(job.state));
        }
        if self.requires_approval(job_id)? && !self.has_start_approval(job_id) {
            return Err(JobError::ApprovalRequired(job_id.to_string()));
        }
        let now = self.world.now_s;
        let job = self.world.jobs.get_mut(job_id).expect("checked");
        job.transition(JobState::Queued, now)
            .map_err(JobError::IllegalTransition)?;
        let mut events = Vec::new();
        self.emit(
            &mut events,
            JobEvent::state(now, job_id, JobState::Queued, None),
        );
        self.dispatch(&mut events);
        Ok((self.world.jobs[job_id].clone(), events))
    }

    pub fn cancel_job(&mut self, job_id: &str) -> Result<(Job, Vec<JobEvent>), JobError> {
        let now = self.world.now_s;
        let job = self
            .world
            .jobs
            .get_mut(job_id)
            .ok_or_else(|| JobError::not_found(EntityKind::Job, job_id))?;
        job.transition(JobState::Cancelled, now)
            .map_err(JobError::IllegalTransition)?;
        let freed = job.assigned_actor_ids.clone();
        self.release_actors(&freed);
        let mut events = Vec::new();
        self.emit(
            &mut events,
            JobEvent::state(now, job_id, JobState::Cancelled, None),
        );
        self.dispatch(&mut events);
        Ok((self.world.jobs[job_id].clone(), events))
    }

    fn release_actors(&mut self, ids: &[String]) {
        for a in ids {
            if let Some(actor) = self.world.actors.get_mut(a) {
                if actor.status == ActorStatus::Busy {
                    actor.status = ActorStatus::Idle;
                }
            }
        }
    }

    /// Assigns idle capable actors to queued jobs, oldest job first.
    fn dispatch(&mut self, events: &mut Vec<JobEvent>) {
        let mut queued: Vec<(f64, String)> = self
            .world
            .jobs
            .values()
            .filter(|j| j.state == JobState::Queued)
            .map(|j| (j.created_at, j.id.clone()))
            .collect();
        queued.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let now = self.world.now_s;
        for (_, job_id) in queued {
            let job = &self.world.jobs[&job_id];
            let Ok(wf) = self.world.workflow(&job.workflow_id) else {
                continue;
            };
            let capability = wf.required_capability.clone();
            let actor_id = self
                .world
                .actors
                .values()
                .find(|a| {
                    a.lab_id == job.lab_id
                        && a.status == ActorStatus::Idle
                        && a.capabilities.contains(&capability)
                })
                .map(|a| a.id.clone());
            let Some(actor_id) = actor_id else {
                continue;
            };
            self.world.actors.get_mut(&actor_id).expect("found").status = ActorStatus::Busy;
            let job = self.world.jobs.get_mut(&job_id).expect("listed");
            job.assigned_actor_ids = vec![actor_id.clone()];
            job.transition(JobState::Running, now)
                .expect("queued → running is legal");
            self.emit(
                events,
                JobEvent::state(
                    now,
                    &job_id,
                    JobState::Running,
                    Some(format!("assigned {actor_id}")),
                ),
            );
        }
    }

    /// Virtual time at which a running job finishes.
    pub fn due_at(&self, job: &Job) -> Option<f64> {
        let started = job.started_at?;
        let nominal = self
            .world
            .workflows
            .get(&job.workflow_id)?
            .nominal_duration_s;
        let jitter = self.constants.jitter_fraction
            * (2.0 * keyed_unit(self.world.seed, &job.id, "jitter") - 1.0);
        Some(started + nominal * (1.0 + jitter))
    }

    /// Advances the clock by `dt_s`, firing due completions in time order
    /// (ties by job id ascending) and dispatching freed actors as it goes.
    pub fn tick(&mut self, dt_s: f64) -> Result<Vec<JobEvent>, JobError> {
        if dt_s <= 0.0 || !dt_s.is_finite() {
            return Err(JobError::Precondition(format!(
                "tick requires dt_s > 0, got {dt_s}"
            )));
        }
        let target = self.world.now_s + dt_s;
        let mut events = Vec::new();
        self.dispatch(&mut events);
        loop {
            let next = self
                .world
                .jobs
                .values()
                .filter(|j| j.state == JobState::Running)
                .filter_map(|j| self.due_at(j).map(|d| (d, j.id.clone())))
                .filter(|(d, _)| *d <= target)
                .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
            let Some((due, job_id)) = next else {
                break;
            };
            self.world.now_s = self.world.now_s.max(due);
            self.complete(&job_id, &mut events);
            self.dispatch(&mut events);
        }
        self.world.now_s = target;
        Ok(events)
    }

    fn complete(&mut self, job_id: &str, events: &mut Vec<JobEvent>) {
        let now = self.world.now_s;
        let seed = self.world.seed;
        let job = self.world.jobs[job_id].clone();
        let wf = self.world.workflows[&job.workflow_id].clone();
        let fail_p = job
            .parameters
            .get("fail_probability")
            .and_then(Value::as_f64)
            .unwrap_or(0.0);
        let outcome = if keyed_unit(seed, job_id, "fail") < fail_p {
            Err("simulated instrument failure".to_string())
        } else {
            simulate::run_workflow(&wf, &job, seed, self.constants.hplc_noise, now)
        };
        let job = self.world.jobs.get_mut(job_id).expect("exists");
        let (state, detail) = match outcome {
            Ok(result) => {
                job.result = Some(result);
                (JobState::Completed, None)
            }
            Err(reason) => (JobState::Failed, Some(reason)),
        };
        job.transition(state, now)
            .expect("running → terminal is legal");
        let actors = job.assigned_actor_ids.clone();
        self.release_actors(&actors);
        self.emit(events, JobEvent::state(now, job_id, state, detail));
    }

    pub fn query_job_status(&self, job_id: &str) -> Result<JobStatus, JobError> {
        let j = self.world.job(job_id)?;
        Ok(JobStatus {
            job_id: j.id.clone(),
            workflow_id: j.workflow_id.clone(),
            state: j.state,
            created_at: j.created_at,
            started_at: j.started_at,
            ended_at: j.ended_at,
            assigned_actor_ids: j.assigned_actor_ids.clone(),
            result: j.result.clone(),
            attachment_ids: j.attachment_ids.clone(),
        })
    }

    pub fn query_jobs(&self, filter: &JobFilter) -> Vec<Job> {
        query_jobs(&self.world, filter)
    }

    pub fn get_workflow_duration(&self, workflow_id: &str) -> Result<DurationStats, JobError> {
        self.world.workflow(workflow_id)?;
        let durations: Vec<f64> = self
            .world
            .jobs
            .values()
            .filter(|j| j.workflow_id == workflow_id && j.state == JobState::Completed)
            .filter_map(Job::duration_s)
            .collect();
        duration_stats(workflow_id, &durations)
            .ok_or_else(|| JobError::NoData(workflow_id.to_string()))
    }

    /// Stores a PDF document and links it to the job.
    pub fn attach_document(
        &mut self,
        job_id: &str,
        title: &str,
        bytes: Vec<u8>,
    ) -> Result<Document, JobError> {
        self.world.job(job_id)?;
        let doc = Document {
            id: self.world.next_document_id(),
            title: title.to_string(),
            mime: PDF_MIME.into(),
            bytes,
            linked_job_id: Some(job_id.to_string()),
        };
        self.world
            .upsert(crate::lab_model::Entity::Document(doc.clone()))?;
        self.world
            .jobs
            .get_mut(job_id)
            .expect("checked")
            .attachment_ids
            .push(doc.id.clone());
        Ok(doc)
    }

    pub fn create_approval(
        &mut self,
        conversation_id: &str,
        tool_name: &str,
        arguments: Value,
    ) -> ApprovalRequest {
        let req = ApprovalRequest {
            id: self.world.next_approval_id(),
            conversation_id: conversation_id.to_string(),
            tool_name: tool_name.to_string(),
            arguments,
            requested_at: self.world.now_s,
            state: ApprovalState::Pending,
            resolver_user_id: None,
        };
        self.world.approvals.insert(req.id.clone(), req.clone());
        req
    }

    /// Approves or denies a pending request. Requests past their time to live
    /// are expired first and can no longer be approved.
    pub fn resolve_approval(
        &mut self,
        id: &str,
        approve: bool,
        resolver: &str,
    ) -> Result<ApprovalRequest, JobError> {
        self.expire_approvals();
        let req = self
            .world
            .approvals
            .get_mut(id)
            .ok_or_else(|| JobError::not_found(EntityKind::Approval, id))?;
        let to = if approve {
            ApprovalState::Approved
        } else {
            ApprovalState::Denied
        };
        req.resolve(to, Some(resolver)).map_err(|s| {
            JobError::Precondition(format!(
                "approval {id} is already {}",
                approval_state_str(s)
            ))
        })?;
        Ok(req.clone())
    }

    /// Marks pending approvals older than the time to live as expired and
    /// returns them.
    pub fn expire_approvals(&mut self) -> Vec<ApprovalRequest> {
        let now = self.world.now_s;
        let ttl = self.constants.approval_ttl_s;
        let mut expired = Vec::new();
        for req in self.world.approvals.values_mut() {
            if req.state == ApprovalState::Pending && now - req.requested_at >= ttl {
                req.resolve(ApprovalState::Expired, None).expect("pending");
                expired.push(req.clone());
            }
        }
        expired
    }

    pub fn pending_approvals(&self) -> Vec<ApprovalRequest> {
        self.world
            .approvals
            .values()
            .filter(|a| a.state == ApprovalState::Pending)
            .cloned()
            .collect()
    }
}

pub fn approval_state_str(s: ApprovalState) -> &'static str {
    match s {
        ApprovalState::Pending => "pending",
        ApprovalState::Approved => "approved",
        ApprovalState::Denied => "denied",
        ApprovalState::Expired => "expired",
    }
}

/// Conjunctive filter, newest first (ties by id ascending), default limit 50.
/// `created_after` and `created_before` are inclusive bounds.
pub fn query_jobs(world: &World, f: &JobFilter) -> Vec<Job> {
    let mut out: Vec<Job> = world
        .jobs
        .values()
        .filter(|j| f.lab_id.as_ref().is_none_or(|l| *l == j.lab_id))
        .filter(|j| f.workflow_id.as_ref().is_none_or(|w| *w == j.workflow_id))
        .filter(|j| f.state.is_none_or(|s| s == j.state))
        .filter(|j| f.created_after.is_none_or(|t| j.created_at >= t))
        .filter(|j| f.created_before.is_none_or(|t| j.created_at <= t))
        .cloned()
        .collect();
    out.sort_by(|a, b| {
        b.created_at
            .total_cmp(&a.created_at)
            .then_with(|| a.id.cmp(&b.id))
    });
    out.truncate(f.limit.unwrap_or(DEFAULT_QUERY_LIMIT));
    out
}

pub fn result_kind_str(k: ResultKind) -> &'static str {
    match k {
        ResultKind::Hplc => "hplc",
        ResultKind::Synthesis => "synthesis",
        ResultKind::Generic => "generic",
    }
}

/// Ids of running jobs per actor, used by conservation checks.
pub fn running_assignments(world: &World) -> BTreeMap<String, Vec<String>> {
    let mut map: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for j in world.jobs.values().filter(|j| j.state == JobState::Running) {
        for a in &j.assigned_actor_ids {
            map.entry(a.clone()).or_default().push(j.id.clone());
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab_model::seed_world;
    use serde_json::json;

    fn params(v: Value) -> Map<String, Value> {
        v.as_object().unwrap().clone()
    }

    fn engine() -> Engine {
        Engine::new(seed_world(11))
    }

    #[test]
    fn create_and_run_to_completion() {
        let mut e = engine();
        let (job, ev) = e
            .create_job(
                "hplc_retention_screen",
                params(json!({"sample": "benzene"})),
                "u1",
            )
            .unwrap();
        assert_eq!(job.state, JobState::Created);
        assert_eq!(ev.len(), 1);
        let (job, ev) = e.start_job(&job.id).unwrap();
        assert_eq!(job.state, JobState::Running);
        assert_eq!(
            ev.iter().map(|e| e.state.unwrap()).collect::<Vec<_>>(),
            [JobState::Queued, JobState::Running]
        );
        let ev = e.tick(1200.0 * 1.11).unwrap();
        assert_eq!(ev.last().unwrap().state, Some(JobState::Completed));
        let status = e.query_job_status(&job.id).unwrap();
        let rt = status.result.unwrap().number("retention_time_min").unwrap();
        assert!((rt - 2.481).abs() <= 0.05 + 1e-9, "{rt}");
        assert!(e
            .world()
            .actors
            .values()
            .all(|a| a.status == ActorStatus::Idle));
        e.world().validate().unwrap();
    }

    #[test]
    fn schema_and_permission_errors() {
        let mut e = engine();
        match e.create_job("hplc_purity_check", params(json!({"sample": 42})), "u1") {
            Err(JobError::Validation(errs)) => assert_eq!(errs[0].field, "sample"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            e.create_job("wf_x", Map::new(), "u1"),
            Err(JobError::World(WorldError::NotFound { .. }))
        ));
        assert!(matches!(
            e.create_job("plate_prep", params(json!({"plate_format": "96"})), "u2"),
            Err(JobError::Permission { .. })
        ));
    }

    #[test]
    fn high_stakes_requires_approval() {
        let mut e = engine();
        let (job, _) = e
            .create_job(
                "hplc_purity_check",
                params(json!({"sample": "aspirin"})),
                "u1",
            )
            .unwrap();
        assert_eq!(
            e.start_job(&job.id).unwrap_err(),
            JobError::ApprovalRequired(job.id.clone())
        );
        let req = e.create_approval("c1", "start_job", json!({"job_id": job.id}));
        e.resolve_approval(&req.id, true, "u1").unwrap();
        assert_eq!(e.start_job(&job.id).unwrap().0.state, JobState::Running);
        let err = e.start_job(&job.id).unwrap_err();
        assert_eq!(err, JobError::IllegalTransition(JobState::Running));
    }

    #[test]
    fn approvals_expire() {
        let mut e = engine();
        let req = e.create_approval("c1", "start_job", json!({"job_id": "j9"}));
        e.tick(299.0).unwrap();
        assert!(e.expire_approvals().is_empty());
        e.tick(1.0).unwrap();
        assert_eq!(e.expire_approvals().len(), 1);
        assert!(e.resolve_approval(&req.id, true, "u1").is_err());
    }

    #[test]
    fn tick_rejects_non_positive() {
        let mut e = engine();
        assert!(matches!(e.tick(0.0), Err(JobError::Precondition(_))));
        assert!(matches!(e.tick(-1.0), Err(JobError::Precondition(_))));
    }

    #[test]
    fn queued_waits_for_actor() {
        let mut e = engine();
        let mut ids = vec![];
        for _ in 0..3 {
            let (j, _) = e
                .create_job(
                    "hplc_retention_screen",
                    params(json!({"sample": "water"})),
                    "u1",
                )
                .unwrap();
            ids.push(e.start_job(&j.id).unwrap().0);
        }
        // Two HPLC instruments, so the third job waits.
        assert_eq!(
            ids.iter().filter(|j| j.state == JobState::Running).count(),
            2
        );
        assert_eq!(ids[2].state, JobState::Queued);
        e.tick(5000.0).unwrap();
        assert!(ids
            .iter()
            .all(|j| e.world().jobs[&j.id].state == JobState::Completed));
    }

    #[test]
    fn cancel_frees_actor() {
        let mut e = engine();
        let (j, _) = e
            .create_job("plate_prep", params(json!({"plate_format": "96"})), "u1")
            .unwrap();
        e.start_job(&j.id).unwrap();
        assert_eq!(e.world().actors["LH-01"].status, ActorStatus::Busy);
        e.cancel_job(&j.id).unwrap();
        assert_eq!(e.world().actors["LH-01"].status, ActorStatus::Idle);
        assert_eq!(
            e.cancel_job(&j.id).unwrap_err(),
            JobError::IllegalTransition(JobState::Cancelled)
        );
        e.world().validate().unwrap();
    }

    #[test]
    fn failure_injection() {
        let mut e = engine();
        let (j, _) = e
            .create_job(
                "sample_weighing",
                params(json!({"sample": "x", "fail_probability": 1.0})),
                "u1",
            )
            .unwrap();
        e.start_job(&j.id).unwrap();
        e.tick(1000.0).unwrap();
        let job = &e.world().jobs[&j.id];
        assert_eq!(job.state, JobState::Failed);
        assert!(job.result.is_none());
    }

    #[test]
    fn query_filters_and_order() {
        let mut e = engine();
        for i in 0..4 {
            e.create_job("plate_prep", params(json!({"plate_format": "96"})), "u1")
                .unwrap();
            if i % 2 == 0 {
                e.tick(10.0).unwrap();
            }
        }
        let all = e.query_jobs(&JobFilter::default());
        assert_eq!(all.len(), 4);
        assert!(all.windows(2).all(|w| w[0].created_at >= w[1].created_at));
        assert_eq!(all[0].id, "j4");
        let some = e.query_jobs(&JobFilter {
            created_after: Some(10.0),
            created_before: Some(10.0),
            ..Default::default()
        });
        assert_eq!(
            some.iter().map(|j| j.id.as_str()).collect::<Vec<_>>(),
            ["j2", "j3"]
        );
        assert!(e
            .query_jobs(&JobFilter {
                lab_id: Some("lab-b".into()),
                ..Default::default()
            })
            .is_empty());
    }

    #[test]
    fn duration_requires_data() {
        let e = engine();
        assert_eq!(
            e.get_workflow_duration("plate_prep").unwrap_err(),
            JobError::NoData("plate_prep".into())
        );
        assert!(matches!(
            e.get_workflow_duration("nope"),
            Err(JobError::World(_))
        ));
    }

    #[test]
    fn attachments() {
        let mut e = engine();
        let (j, _) = e
            .create_job("plate_prep", params(json!({"plate_format": "96"})), "u1")
            .unwrap();
        let a = e.attach_document(&j.id, "r", b"%PDF-1.4".to_vec()).unwrap();
        let b = e.attach_document(&j.id, "r", b"%PDF-1.4".to_vec()).unwrap();
        assert_ne!(a.id, b.id);
        assert_eq!(e.world().jobs[&j.id].attachment_ids.len(), 2);
        assert!(e.attach_document("j99", "r", b"x".to_vec()).is_err());
    }
}
