//! Model adapters: the interface the agent runtime asks for its next move,
//! a deterministic rule-table implementation, a minimal remote HTTP client
//! and the vector memory used for retrieval.

mod memory;
mod remote;
mod scripted;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::mcp::RemoteTool;

pub use memory::{cosine, embed, MemoryError, MemoryHit, MemoryRecord, MemoryStore, EMBED_DIM};
pub use remote::RemoteModel;
pub use scripted::{RuleLoadError, ScriptedModel, FALLBACK_REPLY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub agent: Option<String>,
    pub content: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
    /// Tool name, on tool messages.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub is_error: bool,
}

impl Message {
    fn plain(role: Role, agent: Option<&str>, content: impl Into<String>) -> Self {
        Self {
            role,
            agent: agent.map(str::to_string),
            content: content.into(),
            tool_call_id: None,
            name: None,
            is_error: false,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, None, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, None, content)
    }

    pub fn assistant(agent: &str, content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, Some(agent), content)
    }

    pub fn tool(
        agent: &str,
        call_id: &str,
        name: &str,
        content: impl Into<String>,
        is_error: bool,
    ) -> Self {
        Self {
            tool_call_id: Some(call_id.to_string()),
            name: Some(name.to_string()),
            is_error,
            ..Self::plain(Role::Tool, Some(agent), content)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Handoff {
    pub target: String,
    #[serde(default)]
    pub reason: String,
}

/// Exactly one of a final answer, a batch of tool calls or a handoff.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelAction {
    FinalText(String),
    ToolCalls(Vec<ToolCall>),
    Handoff(Handoff),
}

#[derive(Debug, Clone, Serialize)]
pub struct ModelRequest {
    pub agent: String,
    pub messages: Vec<Message>,
    pub available_tools: Vec<RemoteTool>,
    pub available_handoffs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model transport failure: {0}")]
    Transport(String),
    #[error("model returned a malformed action: {0}")]
    Malformed(String),
    #[error("tool '{tool}' is outside the toolset of agent '{agent}'")]
    ToolScope { agent: String, tool: String },
    #[error("agent '{agent}' may not hand off to '{target}'")]
    HandoffScope { agent: String, target: String },
}

pub trait ModelAdapter: Send + Sync {
    fn complete(&self, request: &ModelRequest) -> Result<ModelAction, ModelError>;
}

/// Enforces the adapter postcondition: tool calls name only available
/// tools with unique ids, and handoffs target only available agents.
pub fn check_action(request: &ModelRequest, action: &ModelAction) -> Result<(), ModelError> {
    match action {
        ModelAction::FinalText(_) => Ok(()),
        ModelAction::ToolCalls(calls) => {
            if calls.is_empty() {
                return Err(ModelError::Malformed("empty tool call list".into()));
            }
            let mut ids = BTreeSet::new();
            for c in calls {
                if !request
                    .available_tools
                    .iter()
                    .any(|t| t.name == c.tool_name)
                {
                    return Err(ModelError::ToolScope {
                        agent: request.agent.clone(),
                        tool: c.tool_name.clone(),
                    });
                }
                if !ids.insert(c.id.as_str()) {
                    return Err(ModelError::Malformed(format!(
                        "duplicate tool call id '{}'",
                        c.id
                    )));
                }
            }
            Ok(())
        }
        ModelAction::Handoff(h) => {
            if request.available_handoffs.contains(&h.target) {
                Ok(())
            } else {
                Err(ModelError::HandoffScope {
                    agent: request.agent.clone(),
                    target: h.target.clone(),
                })
            }
        }
    }
}

/// Runs the adapter and checks its answer.
pub fn complete_checked(
    model: &dyn ModelAdapter,
    request: &ModelRequest,
) -> Result<ModelAction, ModelError> {
    let action = model.complete(request)?;
    check_action(request, &action)?;
    Ok(action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn tool(name: &str) -> RemoteTool {
        RemoteTool {
            name: name.into(),
            description: String::new(),
            input_schema: json!({}),
            category: None,
            requires_approval: false,
        }
    }

    fn request() -> ModelRequest {
        ModelRequest {
            agent: "molecule".into(),
            messages: vec![Message::user("hi")],
            available_tools: vec![tool("molecule_info_from_smiles")],
            available_handoffs: vec!["supervisor".into()],
        }
    }

    fn call(id: &str, name: &str) -> ToolCall {
        ToolCall {
            id: id.into(),
            tool_name: name.into(),
            arguments: Map::new(),
        }
    }

    #[test]
    fn action_wire_shape() {
        let a = ModelAction::FinalText("done".into());
        assert_eq!(
            serde_json::to_value(&a).unwrap(),
            json!({"final_text": "done"})
        );
        let h: ModelAction = serde_json::from_value(json!({"handoff": {"target": "lab"}})).unwrap();
        assert_eq!(
            h,
            ModelAction::Handoff(Handoff {
                target: "lab".into(),
                reason: String::new()
            })
        );
    }

    #[test]
    fn scope_checks() {
        let r = request();
        assert!(check_action(
            &r,
            &ModelAction::ToolCalls(vec![call("a", "molecule_info_from_smiles")])
        )
        .is_ok());
        assert!(matches!(
            check_action(&r, &ModelAction::ToolCalls(vec![call("a", "start_job")])),
            Err(ModelError::ToolScope { .. })
        ));
        assert!(matches!(
            check_action(
                &r,
                &ModelAction::ToolCalls(vec![
                    call("a", "molecule_info_from_smiles"),
                    call("a", "molecule_info_from_smiles")
                ])
            ),
            Err(ModelError::Malformed(_))
        ));
        assert!(matches!(
            check_action(
                &r,
                &ModelAction::Handoff(Handoff {
                    target: "report".into(),
                    reason: String::new()
                })
            ),
            Err(ModelError::HandoffScope { .. })
        ));
    }
}
