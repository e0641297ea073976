//! Minimal HTTP model client.
//!
//! Wire format: `POST {base}/v1/chat` with `{model, agent, messages, tools,
//! handoffs}`; the reply is `{action: ModelAction}`.

use serde::Deserialize;
use serde_json::json;

use super::{ModelAction, ModelAdapter, ModelError, ModelRequest};

pub struct RemoteModel {
    url: String,
    model: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

#[derive(Deserialize)]
struct Reply {
    action: ModelAction,
}

impl RemoteModel {
    pub fn new(base_url: &str, model: &str, api_key: Option<String>) -> Self {
        Self {
            url: format!("{}/v1/chat", base_url.trim_end_matches('/')),
            model: model.to_string(),
            api_key,
            agent: ureq::Agent::new_with_defaults(),
        }
    }
}

impl ModelAdapter for RemoteModel {
    fn complete(&self, request: &ModelRequest) -> Result<ModelAction, ModelError> {
        let body = json!({
            "model": self.model,
            "agent": request.agent,
            "messages": request.messages,
            "tools": request.available_tools,
            "handoffs": request.available_handoffs,
        });
        let mut call = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("authorization", &format!("Bearer {key}"));
        }
        let mut resp = call
            .send_json(&body)
            .map_err(|e| ModelError::Transport(e.to_string()))?;
        let reply: Reply = resp
            .body_mut()
            .read_json()
            .map_err(|e| ModelError::Malformed(e.to_string()))?;
        Ok(reply.action)
    }
}
