//! The turn loop: guard the input, let the active agent act until the
//! supervisor produces a reply, suspending on tool calls that need a human
//! approval.

use std::collections::BTreeMap;
use std::sync::{Arc, Mutex};

use serde_json::{json, Map, Value};
use thiserror::Error;

use super::{
    truncate_context, AgentProfile, ContextError, ConversationState, GuardCategory, Guardrail,
    PendingCall, RoutingError, CONTEXT_PREFIX, MEMORY_PREFIX, SUPERVISOR,
};
use crate::mcp::client::{ClientError, RemoteTool, ToolRouter};
use crate::mcp::server::CallContext;
use crate::model::{
    complete_checked, MemoryStore, Message, ModelAction, ModelAdapter, ModelError, ModelRequest,
    Role, ToolCall,
};
use crate::observability::{SpanKind, SpanStatus, Tracer};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Limits {
    pub max_steps: usize,
    pub max_handoff_depth: usize,
    pub context_budget_tokens: usize,
    pub memory_top_k: usize,
    pub memory_min_score: f64,
}

impl Default for Limits {
    fn default() -> Self {
        Self {
            max_steps: 16,
            max_handoff_depth: 4,
            context_budget_tokens: 8000,
            memory_top_k: 3,
            memory_min_score: 0.25,
        }
    }
}

/// What the runtime needs from its surroundings.
pub trait Host: Send + Sync {
    fn now_s(&self) -> f64;
    /// Names and ids of existing entities, for the topical check.
    fn known_entities(&self) -> Vec<String>;
    /// Whether this particular call must wait for a human.
    fn needs_approval(&self, tool: &str, arguments: &Map<String, Value>) -> bool;
    /// Files an approval request and returns its id.
    fn request_approval(
        &self,
        conversation_id: &str,
        tool: &str,
        arguments: &Map<String, Value>,
    ) -> Result<String, String>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ApprovalDecision {
    Approved,
    Denied,
    Expired,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TurnOutcome {
    Reply {
        text: String,
        agent: String,
    },
    Blocked {
        category: GuardCategory,
        text: String,
    },
    PendingApproval {
        approval_id: String,
        tool_name: String,
        arguments: Map<String, Value>,
    },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TurnError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("step budget exhausted after {0} model calls")]
    StepBudget(usize),
    #[error("handoff budget exhausted after {0} handoffs")]
    HandoffBudget(usize),
    #[error(transparent)]
    Routing(#[from] RoutingError),
    #[error(transparent)]
    Context(#[from] ContextError),
    #[error("tool transport: {0}")]
    Tool(String),
    #[error("conversation is waiting on approval {0}")]
    AwaitingApproval(String),
    #[error("conversation has no pending approval")]
    NoPending,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurnResult {
    pub turn_id: String,
    pub outcome: Result<TurnOutcome, TurnError>,
}

#[derive(Debug, Error)]
pub enum RuntimeBuildError {
    #[error("agent '{agent}' lists tool '{tool}' that no attached server provides")]
    MissingTool { agent: String, tool: String },
    #[error("no supervisor profile")]
    NoSupervisor,
}

pub struct Runtime {
    profiles: BTreeMap<String, AgentProfile>,
    model: Arc<dyn ModelAdapter>,
    guardrail: Guardrail,
    router: Mutex<ToolRouter>,
    limits: Limits,
    memory: Option<Arc<MemoryStore>>,
    tracer: Arc<Tracer>,
}

type Attrs = BTreeMap<String, Value>;

fn attrs<const N: usize>(pairs: [(&str, Value); N]) -> Attrs {
    pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Per-turn bookkeeping shared by the helpers below.
struct Turn<'a> {
    host: &'a dyn Host,
    turn_id: String,
    span: String,
    user_id: String,
    steps: usize,
    handoffs: usize,
}

impl Runtime {
    pub fn new(
        profiles: BTreeMap<String, AgentProfile>,
        model: Arc<dyn ModelAdapter>,
        guardrail: Guardrail,
        router: ToolRouter,
        limits: Limits,
        memory: Option<Arc<MemoryStore>>,
        tracer: Arc<Tracer>,
    ) -> Result<Self, RuntimeBuildError> {
        if !profiles.contains_key(SUPERVISOR) {
            return Err(RuntimeBuildError::NoSupervisor);
        }
        for p in profiles.values() {
            if let Some(t) = p.tool_names.iter().find(|t| router.tool(t).is_none()) {
                return Err(RuntimeBuildError::MissingTool {
                    agent: p.name.clone(),
                    tool: t.clone(),
                });
            }
        }
        Ok(Self {
            profiles,
            model,
            guardrail,
            router: Mutex::new(router),
            limits,
            memory,
            tracer,
        })
    }

    pub fn profiles(&self) -> &BTreeMap<String, AgentProfile> {
        &self.profiles
    }

    pub fn guardrail(&self) -> &Guardrail {
        &self.guardrail
    }

    pub fn tracer(&self) -> &Arc<Tracer> {
        &self.tracer
    }

    pub fn limits(&self) -> Limits {
        self.limits
    }

    pub fn new_conversation(&self, conversation_id: &str) -> ConversationState {
        ConversationState::new(conversation_id, &self.profiles[SUPERVISOR].instructions)
    }

    fn end_span(&self, id: &str, status: SpanStatus, extra: Attrs, now: f64) {
        // A double end is a bug in the caller, never a reason to fail a turn.
        let _ = self.tracer.end(id, status, extra, now);
    }

    fn child(
        &self,
        state: &ConversationState,
        t: &Turn,
        kind: SpanKind,
        name: &str,
        a: Attrs,
    ) -> String {
        self.tracer.begin(
            &state.conversation_id,
            &t.turn_id,
            Some(&t.span),
            kind,
            name,
            a,
            t.host.now_s(),
        )
    }

    fn open_turn<'a>(
        &self,
        host: &'a dyn Host,
        state: &mut ConversationState,
        user_id: &str,
        name: &str,
        a: Attrs,
    ) -> Turn<'a> {
        state.turns += 1;
        let turn_id = format!("{}-t{}", state.conversation_id, state.turns);
        let span = self.tracer.begin(
            &state.conversation_id,
            &turn_id,
            None,
            SpanKind::Turn,
            name,
            a,
            host.now_s(),
        );
        Turn {
            host,
            turn_id,
            span,
            user_id: user_id.to_string(),
            steps: 0,
            handoffs: 0,
        }
    }

    fn close_turn(&self, t: Turn, outcome: Result<TurnOutcome, TurnError>) -> TurnResult {
        let (status, label) = match &outcome {
            Ok(TurnOutcome::Reply { .. }) => (SpanStatus::Ok, json!("reply")),
            Ok(TurnOutcome::Blocked { .. }) => (SpanStatus::Ok, json!("blocked")),
            Ok(TurnOutcome::PendingApproval { .. }) => (SpanStatus::Ok, json!("pending_approval")),
            Err(e) => (SpanStatus::Error, json!(e.to_string())),
        };
        self.end_span(
            &t.span,
            status,
            attrs([("outcome", label), ("steps", json!(t.steps))]),
            t.host.now_s(),
        );
        TurnResult {
            turn_id: t.turn_id,
            outcome,
        }
    }

    /// Runs one user turn. On error the conversation is restored to its
    /// state before the turn.
    pub fn run_turn(
        &self,
        host: &dyn Host,
        state: &mut ConversationState,
        user_id: &str,
        text: &str,
    ) -> TurnResult {
        let mut t = self.open_turn(
            host,
            state,
            user_id,
            "turn",
            attrs([("user_id", json!(user_id))]),
        );
        if let Some(p) = &state.pending {
            let e = TurnError::AwaitingApproval(p.approval_id.clone());
            return self.close_turn(t, Err(e));
        }
        let g = self.child(
            state,
            &t,
            SpanKind::Guardrail,
            "input",
            attrs([("stage", json!("input"))]),
        );
        let verdict = self.guardrail.guard_input(text, &host.known_entities());
        self.end_span(&g, SpanStatus::Ok, verdict_attrs(&verdict), host.now_s());
        if let Some(category) = verdict.category {
            let text = format!(
                "I can't help with that request: it was blocked by the {} guardrail.",
                category.as_str()
            );
            return self.close_turn(t, Ok(TurnOutcome::Blocked { category, text }));
        }
        let before = state.clone();
        state.messages.push(Message::user(text));
        let outcome = self.drive(&mut t, state);
        if outcome.is_err() {
            let turns = state.turns;
            *state = before;
            state.turns = turns;
        }
        self.close_turn(t, outcome)
    }

    /// Continues a conversation suspended on an approval.
    pub fn resume(
        &self,
        host: &dyn Host,
        state: &mut ConversationState,
        decision: ApprovalDecision,
    ) -> TurnResult {
        let Some(pending) = state.pending.clone() else {
            let t = self.open_turn(host, state, "", "resume", Attrs::new());
            return self.close_turn(t, Err(TurnError::NoPending));
        };
        let label = match decision {
            ApprovalDecision::Approved => "approved",
            ApprovalDecision::Denied => "denied",
            ApprovalDecision::Expired => "expired",
        };
        let mut t = self.open_turn(
            host,
            state,
            &pending.user_id,
            "resume",
            attrs([
                ("approval_id", json!(pending.approval_id)),
                ("decision", json!(label)),
            ]),
        );
        let before = state.clone();
        state.pending = None;
        let call = &pending.calls[pending.index];
        let outcome = if decision == ApprovalDecision::Approved {
            state.active_agent = pending.agent.clone();
            match self.execute_calls(
                &mut t,
                state,
                &pending.agent,
                &pending.calls,
                pending.index,
                true,
            ) {
                Ok(Some(p)) => Ok(p),
                Ok(None) => self.drive(&mut t, state),
                Err(e) => Err(e),
            }
        } else {
            // A refusal needs no model call: record it and let the
            // supervisor answer directly.
            let note = format!(
                "approval {} was {label}; {} was not run",
                pending.approval_id, call.tool_name
            );
            state.messages.push(Message::tool(
                &pending.agent,
                &call.id,
                &call.tool_name,
                note,
                true,
            ));
            state.active_agent = SUPERVISOR.into();
            let text = match decision {
                ApprovalDecision::Expired => format!(
                    "The request to run {} expired and was treated as denied, so nothing was started.",
                    call.tool_name
                ),
                _ => format!("The request to run {} was denied, so nothing was started.", call.tool_name),
            };
            state.messages.push(Message::assistant(SUPERVISOR, &text));
            Ok(TurnOutcome::Reply {
                text,
                agent: SUPERVISOR.into(),
            })
        };
        if outcome.is_err() {
            let turns = state.turns;
            *state = before;
            state.turns = turns;
        }
        self.close_turn(t, outcome)
    }

    fn request_for(
        &self,
        state: &ConversationState,
        agent: &str,
    ) -> Result<ModelRequest, TurnError> {
        let profile = self
            .profiles
            .get(agent)
            .ok_or_else(|| RoutingError::UnknownAgent(agent.to_string()))?;
        let mut messages = Vec::with_capacity(state.messages.len() + 2);
        messages.push(Message::system(&profile.instructions));
        messages.extend(state.messages.iter().skip(1).cloned());
        if !state.shared_context.is_empty() {
            let ctx = serde_json::to_string(&state.shared_context).expect("context serializes");
            messages.push(Message::system(format!("{CONTEXT_PREFIX}{ctx}")));
        }
        if agent == SUPERVISOR {
            if let Some(m) = self.memory_message(state) {
                messages.push(m);
            }
        }
        let messages = truncate_context(&messages, self.limits.context_budget_tokens)?;
        let router = self.router.lock().unwrap_or_else(|p| p.into_inner());
        let available_tools: Vec<RemoteTool> = profile
            .tool_names
            .iter()
            .filter_map(|n| router.tool(n).cloned())
            .collect();
        Ok(ModelRequest {
            agent: agent.to_string(),
            messages,
            available_tools,
            available_handoffs: profile.handoff_targets.clone(),
        })
    }

    fn memory_message(&self, state: &ConversationState) -> Option<Message> {
        let store = self.memory.as_ref()?;
        let query = state.messages.iter().rev().find(|m| m.role == Role::User)?;
        let hits = store
            .search(&query.content, self.limits.memory_top_k)
            .ok()?;
        let lines: Vec<String> = hits
            .into_iter()
            .filter(|h| h.score >= self.limits.memory_min_score)
            .map(|h| format!("- {}", h.text))
            .collect();
        if lines.is_empty() {
            None
        } else {
            Some(Message::system(format!(
                "{MEMORY_PREFIX}\n{}",
                lines.join("\n")
            )))
        }
    }

    fn drive(&self, t: &mut Turn, state: &mut ConversationState) -> Result<TurnOutcome, TurnError> {
        loop {
            if t.steps >= self.limits.max_steps {
                return Err(TurnError::StepBudget(t.steps));
            }
            t.steps += 1;
            let agent = state.active_agent.clone();
            let request = self.request_for(state, &agent)?;
            let span = self.child(
                state,
                t,
                SpanKind::ModelCall,
                &agent,
                attrs([("agent", json!(agent))]),
            );
            let action = complete_checked(self.model.as_ref(), &request);
            let kind = match &action {
                Ok(ModelAction::FinalText(_)) => json!("final_text"),
                Ok(ModelAction::ToolCalls(_)) => json!("tool_calls"),
                Ok(ModelAction::Handoff(_)) => json!("handoff"),
                Err(e) => json!(e.to_string()),
            };
            let status = if action.is_ok() {
                SpanStatus::Ok
            } else {
                SpanStatus::Error
            };
            self.end_span(&span, status, attrs([("action", kind)]), t.host.now_s());
            match action? {
                ModelAction::FinalText(text) => {
                    let text = self.guard_output(state, t, &text);
                    if agent == SUPERVISOR {
                        state.messages.push(Message::assistant(SUPERVISOR, &text));
                        if let Some(store) = &self.memory {
                            let meta = attrs([
                                ("kind", json!("reply")),
                                ("conversation_id", json!(state.conversation_id)),
                                ("at_s", json!(t.host.now_s())),
                            ]);
                            // Memory is best effort; a failed write does not
                            // invalidate the reply.
                            let _ = store.add(&text, meta);
                        }
                        return Ok(TurnOutcome::Reply { text, agent });
                    }
                    let span = self.child(
                        state,
                        t,
                        SpanKind::Handoff,
                        &format!("{agent} -> {SUPERVISOR}"),
                        attrs([
                            ("from", json!(agent)),
                            ("to", json!(SUPERVISOR)),
                            ("reason", json!("return")),
                        ]),
                    );
                    state.return_to_supervisor(&text);
                    self.end_span(&span, SpanStatus::Ok, Attrs::new(), t.host.now_s());
                }
                ModelAction::Handoff(h) => {
                    t.handoffs += 1;
                    if t.handoffs > self.limits.max_handoff_depth {
                        return Err(TurnError::HandoffBudget(t.handoffs - 1));
                    }
                    let span = self.child(
                        state,
                        t,
                        SpanKind::Handoff,
                        &format!("{agent} -> {}", h.target),
                        attrs([
                            ("from", json!(agent)),
                            ("to", json!(h.target)),
                            ("reason", json!(h.reason)),
                        ]),
                    );
                    let r = state.perform_handoff(&self.profiles, &h.target, &h.reason);
                    let status = if r.is_ok() {
                        SpanStatus::Ok
                    } else {
                        SpanStatus::Error
                    };
                    self.end_span(&span, status, Attrs::new(), t.host.now_s());
                    r?;
                }
                ModelAction::ToolCalls(calls) => {
                    let calls: Vec<ToolCall> = calls
                        .into_iter()
                        .map(|mut c| {
                            state.next_call += 1;
                            c.id = format!("call-{}", state.next_call);
                            c
                        })
                        .collect();
                    let listing = serde_json::to_string(&json!({ "tool_calls": calls }))
                        .expect("calls serialize");
                    state.messages.push(Message::assistant(&agent, listing));
                    if let Some(p) = self.execute_calls(t, state, &agent, &calls, 0, false)? {
                        return Ok(p);
                    }
                }
            }
        }
    }

    fn guard_output(&self, state: &ConversationState, t: &Turn, text: &str) -> String {
        let span = self.child(
            state,
            t,
            SpanKind::Guardrail,
            "output",
            attrs([("stage", json!("output"))]),
        );
        let verdict = self.guardrail.guard_output(text);
        self.end_span(
            &span,
            SpanStatus::Ok,
            verdict_attrs(&verdict),
            t.host.now_s(),
        );
        match verdict.category {
            Some(c) => format!("The response was withheld by the {} guardrail.", c.as_str()),
            None => text.to_string(),
        }
    }

    /// Runs `calls[start..]` in order. Returns a pending outcome when a call
    /// must wait for approval; `approved_first` skips that check for the
    /// call at `start`.
    fn execute_calls(
        &self,
        t: &mut Turn,
        state: &mut ConversationState,
        agent: &str,
        calls: &[ToolCall],
        start: usize,
        approved_first: bool,
    ) -> Result<Option<TurnOutcome>, TurnError> {
        for (i, call) in calls.iter().enumerate().skip(start) {
            let gated = self
                .router
                .lock()
                .unwrap_or_else(|p| p.into_inner())
                .tool(&call.tool_name)
                .is_some_and(|d| d.requires_approval);
            let skip_check = approved_first && i == start;
            if gated && !skip_check && t.host.needs_approval(&call.tool_name, &call.arguments) {
                let approval_id = t
                    .host
                    .request_approval(&state.conversation_id, &call.tool_name, &call.arguments)
                    .map_err(TurnError::Tool)?;
                state.pending = Some(PendingCall {
                    approval_id: approval_id.clone(),
                    agent: agent.to_string(),
                    user_id: t.user_id.clone(),
                    calls: calls.to_vec(),
                    index: i,
                });
                return Ok(Some(TurnOutcome::PendingApproval {
                    approval_id,
                    tool_name: call.tool_name.clone(),
                    arguments: call.arguments.clone(),
                }));
            }
            let span = self.child(
                state,
                t,
                SpanKind::ToolCall,
                &call.tool_name,
                attrs([
                    ("agent", json!(agent)),
                    ("call_id", json!(call.id)),
                    ("arguments", Value::Object(call.arguments.clone())),
                ]),
            );
            let ctx = CallContext {
                user_id: t.user_id.clone(),
                conversation_id: Some(state.conversation_id.clone()),
                trace_parent: Some(span.clone()),
            };
            let result = self.router.lock().unwrap_or_else(|p| p.into_inner()).call(
                &call.tool_name,
                &call.arguments,
                &ctx,
            );
            let (text, is_error) = match result {
                Ok(r) => (
                    r.content
                        .into_iter()
                        .map(|c| c.text)
                        .collect::<Vec<_>>()
                        .join("\n"),
                    r.is_error,
                ),
                Err(ClientError::Rpc(e)) => (e.message, true),
                Err(e) => {
                    self.end_span(
                        &span,
                        SpanStatus::Error,
                        attrs([("error", json!(e.to_string()))]),
                        t.host.now_s(),
                    );
                    return Err(TurnError::Tool(e.to_string()));
                }
            };
            let status = if is_error {
                SpanStatus::Error
            } else {
                SpanStatus::Ok
            };
            self.end_span(
                &span,
                status,
                attrs([("is_error", json!(is_error))]),
                t.host.now_s(),
            );
            if !is_error {
                update_context(&mut state.shared_context, call, &text);
            }
            state.messages.push(Message::tool(
                agent,
                &call.id,
                &call.tool_name,
                text,
                is_error,
            ));
        }
        Ok(None)
    }
}

fn verdict_attrs(v: &super::GuardrailVerdict) -> Attrs {
    let mut a = attrs([("decision", json!(v.decision))]);
    if let Some(c) = v.category {
        a.insert("category".into(), json!(c));
    }
    if let Some(r) = &v.matched_rule {
        a.insert("matched_rule".into(), json!(r));
    }
    a
}

/// Carries facts from tool results into the shared context so later agents
/// can refer to "it".
fn update_context(ctx: &mut BTreeMap<String, Value>, call: &ToolCall, text: &str) {
    let Ok(Value::Object(result)) = serde_json::from_str::<Value>(text) else {
        return;
    };
    let mut set = |key: &str, v: Option<&Value>| {
        if let Some(v) = v.filter(|v| !v.is_null()) {
            ctx.insert(key.to_string(), v.clone());
        }
    };
    match call.tool_name.as_str() {
        "smiles_from_molecule_name" => {
            set("focus_smiles", result.get("smiles"));
            set("focus_name", result.get("matched_name"));
        }
        "molecule_info_from_smiles" | "smiles_to_image" => {
            set("focus_smiles", call.arguments.get("smiles"));
        }
        "create_job" | "start_job" | "cancel_job" => {
            set("active_job_id", result.get("id"));
            set("active_job_state", result.get("state"));
        }
        "query_job_status" => {
            set("active_job_id", result.get("job_id"));
            set("active_job_state", result.get("state"));
        }
        "attach_pdf_of_markdown" => set("last_document_id", result.get("document_id")),
        _ => {}
    }
}
