//! Supervisor and specialist agents: profiles, conversation state, the
//! guardrail, context truncation and the turn loop.

mod context;
mod guardrail;
mod runtime;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::model::{Message, ToolCall};
use crate::tools::roster::{toolset, Specialist};

pub use context::{elided_marker, estimate_tokens, truncate_context, ContextError};
pub use guardrail::{normalize_text, stem, Decision, GuardCategory, Guardrail, GuardrailVerdict};
pub use runtime::{
    ApprovalDecision, Host, Limits, Runtime, RuntimeBuildError, TurnError, TurnOutcome, TurnResult,
};

pub const SUPERVISOR: &str = "supervisor";

/// System message announcing that control moved between agents.
pub const HANDOFF_PREFIX: &str = "[[handoff ";
/// System message marking a specialist's return to the supervisor; the
/// agent name and `]]` follow.
pub const RETURN_PREFIX: &str = "[[return from ";
/// System message carrying the shared context as JSON.
pub const CONTEXT_PREFIX: &str = "[[context]] ";
/// System message carrying retrieved memories.
pub const MEMORY_PREFIX: &str = "[[memory]]";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    pub name: String,
    pub instructions: String,
    pub tool_names: Vec<String>,
    pub handoff_targets: Vec<String>,
}

/// The five profiles: the supervisor routes to every specialist and calls
/// no tools; each specialist has its roster and may only return to the
/// supervisor.
pub fn default_profiles(instructions: &BTreeMap<String, String>) -> BTreeMap<String, AgentProfile> {
    let text = |name: &str| instructions.get(name).cloned().unwrap_or_default();
    let mut out = BTreeMap::new();
    out.insert(
        SUPERVISOR.to_string(),
        AgentProfile {
            name: SUPERVISOR.into(),
            instructions: text(SUPERVISOR),
            tool_names: Vec::new(),
            handoff_targets: Specialist::ALL
                .iter()
                .map(|s| s.as_str().to_string())
                .collect(),
        },
    );
    for s in Specialist::ALL {
        out.insert(
            s.as_str().to_string(),
            AgentProfile {
                name: s.as_str().into(),
                instructions: text(s.as_str()),
                tool_names: toolset(s)
                    .tool_names
                    .iter()
                    .map(|t| t.to_string())
                    .collect(),
                handoff_targets: vec![SUPERVISOR.into()],
            },
        );
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RoutingError {
    #[error("unknown agent '{0}'")]
    UnknownAgent(String),
    #[error("agent '{from}' may not hand off to '{to}'")]
    Forbidden { from: String, to: String },
}

/// A tool batch suspended on a human approval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PendingCall {
    pub approval_id: String,
    pub agent: String,
    pub user_id: String,
    pub calls: Vec<ToolCall>,
    /// Index into `calls` of the call awaiting approval.
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversationState {
    pub conversation_id: String,
    pub messages: Vec<Message>,
    pub shared_context: BTreeMap<String, Value>,
    pub active_agent: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pending: Option<PendingCall>,
    #[serde(default)]
    pub turns: u64,
    #[serde(default)]
    pub next_call: u64,
}

impl ConversationState {
    pub fn new(conversation_id: &str, system_prompt: &str) -> Self {
        Self {
            conversation_id: conversation_id.to_string(),
            messages: vec![Message::system(system_prompt)],
            shared_context: BTreeMap::new(),
            active_agent: SUPERVISOR.into(),
            pending: None,
            turns: 0,
            next_call: 0,
        }
    }

    /// Moves control to `target`, keeping the shared context intact.
    pub fn perform_handoff(
        &mut self,
        profiles: &BTreeMap<String, AgentProfile>,
        target: &str,
        reason: &str,
    ) -> Result<(), RoutingError> {
        let from = profiles
            .get(&self.active_agent)
            .ok_or_else(|| RoutingError::UnknownAgent(self.active_agent.clone()))?;
        if !profiles.contains_key(target) {
            return Err(RoutingError::UnknownAgent(target.to_string()));
        }
        if !from.handoff_targets.iter().any(|t| t == target) {
            return Err(RoutingError::Forbidden {
                from: from.name.clone(),
                to: target.to_string(),
            });
        }
        let marker = if reason.is_empty() {
            format!("{HANDOFF_PREFIX}{} -> {target}]]", from.name)
        } else {
            format!("{HANDOFF_PREFIX}{} -> {target}: {reason}]]", from.name)
        };
        self.messages.push(Message::system(marker));
        self.active_agent = target.to_string();
        Ok(())
    }

    /// Records a specialist's final answer and hands control back to the
    /// supervisor.
    pub fn return_to_supervisor(&mut self, text: &str) {
        let from = std::mem::replace(&mut self.active_agent, SUPERVISOR.into());
        self.messages.push(Message::assistant(&from, text));
        self.messages
            .push(Message::system(format!("{RETURN_PREFIX}{from}]]")));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profiles() -> BTreeMap<String, AgentProfile> {
        default_profiles(&BTreeMap::new())
    }

    #[test]
    fn profile_shape() {
        let p = profiles();
        assert_eq!(p.len(), 5);
        assert!(p[SUPERVISOR].tool_names.is_empty());
        assert_eq!(p[SUPERVISOR].handoff_targets.len(), 4);
        for s in Specialist::ALL {
            assert_eq!(p[s.as_str()].handoff_targets, [SUPERVISOR]);
        }
        assert_eq!(p["molecule"].tool_names.len(), 4);
    }

    #[test]
    fn handoffs_preserve_context_and_forbid_mesh() {
        let p = profiles();
        let mut s = ConversationState::new("c", "sys");
        s.shared_context
            .insert("focus_smiles".into(), Value::from("CCO"));
        s.perform_handoff(&p, "lab", "jobs").unwrap();
        assert_eq!(s.active_agent, "lab");
        assert_eq!(s.shared_context["focus_smiles"], "CCO");
        assert_eq!(
            s.perform_handoff(&p, "report", ""),
            Err(RoutingError::Forbidden {
                from: "lab".into(),
                to: "report".into()
            })
        );
        assert_eq!(s.active_agent, "lab");
        s.perform_handoff(&p, SUPERVISOR, "").unwrap();
        assert!(matches!(
            s.perform_handoff(&p, "wizard", ""),
            Err(RoutingError::UnknownAgent(_))
        ));
    }

    #[test]
    fn state_round_trips() {
        let mut s = ConversationState::new("c", "sys");
        s.messages.push(Message::user("hello"));
        let back: ConversationState =
            serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }
}
