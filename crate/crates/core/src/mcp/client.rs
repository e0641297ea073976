//! MCP client over pluggable transports, and a router that attaches several
//! servers and dispatches each tool call to the server that owns the tool.

use std::collections::BTreeMap;
use std::io::BufReader;
use std::process::{Child, ChildStdin, ChildStdout, Command, Stdio};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::protocol::{notification, request, RpcError, ToolCallResult, PROTOCOL_VERSION};
use super::server::{CallContext, McpServer};
use super::stdio::{write_frame, FrameReader};

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("transport: {0}")]
    Transport(String),
    #[error(transparent)]
    Rpc(#[from] RpcError),
    #[error("protocol: {0}")]
    Protocol(String),
    #[error("no attached server provides tool '{0}'")]
    UnknownTool(String),
    #[error("tool '{tool}' is provided by both '{first}' and '{second}'")]
    DuplicateTool {
        tool: String,
        first: String,
        second: String,
    },
}

/// Moves one message to the server and, when `expect_reply`, returns the
/// next message from it.
pub trait Transport: Send {
    fn exchange(
        &mut self,
        message: &Value,
        expect_reply: bool,
    ) -> Result<Option<Value>, ClientError>;
}

/// Calls a server in the same process, still through the byte-level
/// message handler.
pub struct InProcess {
    server: Arc<McpServer>,
}

impl InProcess {
    pub fn new(server: Arc<McpServer>) -> Self {
        Self { server }
    }
}

impl Transport for InProcess {
    fn exchange(
        &mut self,
        message: &Value,
        expect_reply: bool,
    ) -> Result<Option<Value>, ClientError> {
        let bytes = serde_json::to_vec(message).expect("json value serializes");
        let reply = self.server.handle_message(&bytes);
        match (reply, expect_reply) {
            (Some(r), true) => serde_json::from_slice(&r)
                .map(Some)
                .map_err(|e| ClientError::Protocol(format!("unparsable reply: {e}"))),
            (None, true) => Err(ClientError::Protocol("server sent no reply".into())),
            (_, false) => Ok(None),
        }
    }
}

/// A server running as a child process speaking newline-delimited JSON-RPC
/// on its stdin/stdout.
pub struct StdioChild {
    child: Child,
    stdin: ChildStdin,
    reader: FrameReader<BufReader<ChildStdout>>,
}

impl StdioChild {
    pub fn spawn(program: &str, args: &[&str]) -> Result<Self, ClientError> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|e| ClientError::Transport(format!("spawn {program}: {e}")))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        Ok(Self {
            child,
            stdin,
            reader: FrameReader::new(BufReader::new(stdout)),
        })
    }
}

impl Transport for StdioChild {
    fn exchange(
        &mut self,
        message: &Value,
        expect_reply: bool,
    ) -> Result<Option<Value>, ClientError> {
        let bytes = serde_json::to_vec(message).expect("json value serializes");
        write_frame(&mut self.stdin, &bytes).map_err(|e| ClientError::Transport(e.to_string()))?;
        if !expect_reply {
            return Ok(None);
        }
        let frame = self
            .reader
            .read_frame()
            .map_err(|e| ClientError::Transport(e.to_string()))?
            .ok_or_else(|| ClientError::Transport("server closed its output".into()))?;
        serde_json::from_slice(&frame)
            .map(Some)
            .map_err(|e| ClientError::Protocol(format!("unparsable reply: {e}")))
    }
}

impl Drop for StdioChild {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

/// POSTs each message to an HTTP `/mcp` endpoint.
pub struct Http {
    url: String,
    token: Option<String>,
    agent: ureq::Agent,
}

impl Http {
    pub fn new(url: &str) -> Self {
        Self {
            url: url.to_string(),
            token: None,
            agent: ureq::Agent::new_with_defaults(),
        }
    }

    /// Sends `Authorization: Bearer <token>` with every message.
    pub fn with_token(mut self, token: &str) -> Self {
        self.token = Some(token.to_string());
        self
    }
}

impl Transport for Http {
    fn exchange(
        &mut self,
        message: &Value,
        expect_reply: bool,
    ) -> Result<Option<Value>, ClientError> {
        let mut req = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json");
        if let Some(t) = &self.token {
            req = req.header("authorization", format!("Bearer {t}"));
        }
        let mut resp = req
            .send_json(message)
            .map_err(|e| ClientError::Transport(e.to_string()))?;
        if !expect_reply {
            return Ok(None);
        }
        resp.body_mut()
            .read_json::<Value>()
            .map(Some)
            .map_err(|e| ClientError::Protocol(format!("unparsable reply: {e}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RemoteTool {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "inputSchema", default)]
    pub input_schema: Value,
    #[serde(default)]
    pub category: Option<String>,
    #[serde(rename = "requiresApproval", default)]
    pub requires_approval: bool,
}

pub struct McpClient {
    transport: Box<dyn Transport>,
    next_id: u64,
    server_name: String,
    tools: Vec<RemoteTool>,
}

impl McpClient {
    /// Runs the initialize handshake and fetches the tool list.
    pub fn connect(transport: Box<dyn Transport>) -> Result<Self, ClientError> {
        let mut c = Self {
            transport,
            next_id: 1,
            server_name: String::new(),
            tools: Vec::new(),
        };
        let init = c.request(
            "initialize",
            json!({
                "protocolVersion": PROTOCOL_VERSION,
                "capabilities": {},
                "clientInfo": { "name": "tippy-agent", "version": env!("CARGO_PKG_VERSION") },
            }),
        )?;
        let version = init
            .get("protocolVersion")
            .and_then(Value::as_str)
            .unwrap_or_default();
        if version != PROTOCOL_VERSION {
            return Err(ClientError::Protocol(format!(
                "unsupported protocol version '{version}'"
            )));
        }
        c.server_name = init
            .pointer("/serverInfo/name")
            .and_then(Value::as_str)
            .unwrap_or("unnamed")
            .to_string();
        c.transport
            .exchange(&notification("notifications/initialized", None), false)?;
        let list = c.request("tools/list", json!({}))?;
        c.tools = serde_json::from_value(list.get("tools").cloned().unwrap_or(Value::Null))
            .map_err(|e| ClientError::Protocol(format!("bad tools/list: {e}")))?;
        Ok(c)
    }

    pub fn server_name(&self) -> &str {
        &self.server_name
    }

    pub fn tools(&self) -> &[RemoteTool] {
        &self.tools
    }

    pub fn request(&mut self, method: &str, params: Value) -> Result<Value, ClientError> {
        let id = self.next_id;
        self.next_id += 1;
        let reply = self
            .transport
            .exchange(&request(json!(id), method, Some(params)), true)?
            .ok_or_else(|| ClientError::Protocol("no reply".into()))?;
        if reply.get("id") != Some(&json!(id)) {
            return Err(ClientError::Protocol(format!(
                "reply id {:?} does not match request {id}",
                reply.get("id")
            )));
        }
        if let Some(err) = reply.get("error") {
            let err: RpcError = serde_json::from_value(err.clone())
                .map_err(|e| ClientError::Protocol(format!("bad error object: {e}")))?;
            return Err(ClientError::Rpc(err));
        }
        reply
            .get("result")
            .cloned()
            .ok_or_else(|| ClientError::Protocol("reply without result".into()))
    }

    pub fn call_tool(
        &mut self,
        name: &str,
        arguments: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Result<ToolCallResult, ClientError> {
        let result = self.request(
            "tools/call",
            json!({ "name": name, "arguments": arguments, "_meta": ctx }),
        )?;
        serde_json::from_value(result)
            .map_err(|e| ClientError::Protocol(format!("bad tools/call result: {e}")))
    }
}

/// Several attached servers behind one tool namespace.
#[derive(Default)]
pub struct ToolRouter {
    clients: Vec<McpClient>,
    routes: BTreeMap<String, usize>,
}

impl ToolRouter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn attach(&mut self, client: McpClient) -> Result<(), ClientError> {
        let idx = self.clients.len();
        for t in client.tools() {
            if let Some(&other) = self.routes.get(&t.name) {
                return Err(ClientError::DuplicateTool {
                    tool: t.name.clone(),
                    first: self.clients[other].server_name().to_string(),
                    second: client.server_name().to_string(),
                });
            }
        }
        for t in client.tools() {
            self.routes.insert(t.name.clone(), idx);
        }
        self.clients.push(client);
        Ok(())
    }

    pub fn tool(&self, name: &str) -> Option<&RemoteTool> {
        let idx = *self.routes.get(name)?;
        self.clients[idx].tools().iter().find(|t| t.name == name)
    }

    pub fn tool_names(&self) -> Vec<String> {
        self.routes.keys().cloned().collect()
    }

    pub fn servers(&self) -> Vec<&str> {
        self.clients.iter().map(McpClient::server_name).collect()
    }

    pub fn call(
        &mut self,
        name: &str,
        arguments: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Result<ToolCallResult, ClientError> {
        let idx = *self
            .routes
            .get(name)
            .ok_or_else(|| ClientError::UnknownTool(name.to_string()))?;
        self.clients[idx].call_tool(name, arguments, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab_model::ParameterSchema;
    use crate::mcp::server::{ToolDescriptor, ToolHandler};
    use crate::tools::roster::Category;

    fn server(name: &str, tools: &[&str]) -> Arc<McpServer> {
        let mut s = McpServer::new(name, "1");
        for t in tools {
            let tag = format!("{name}:{t}");
            let h: Arc<dyn ToolHandler> =
                Arc::new(move |_: &Map<String, Value>, _: &CallContext| Ok(tag.clone()));
            s.register_tool(
                ToolDescriptor {
                    name: t.to_string(),
                    description: String::new(),
                    input_schema: ParameterSchema::new(),
                    category: Category::Lab,
                    requires_approval: false,
                },
                h,
            )
            .unwrap();
        }
        Arc::new(s)
    }

    #[test]
    fn router_dispatches_by_owner() {
        let mut r = ToolRouter::new();
        r.attach(McpClient::connect(Box::new(InProcess::new(server("one", &["a", "b"])))).unwrap())
            .unwrap();
        r.attach(McpClient::connect(Box::new(InProcess::new(server("two", &["c"])))).unwrap())
            .unwrap();
        let ctx = CallContext::user("u1");
        assert_eq!(
            r.call("c", &Map::new(), &ctx).unwrap().joined_text(),
            "two:c"
        );
        assert_eq!(
            r.call("a", &Map::new(), &ctx).unwrap().joined_text(),
            "one:a"
        );
        assert!(matches!(
            r.call("z", &Map::new(), &ctx),
            Err(ClientError::UnknownTool(_))
        ));
        assert_eq!(r.tool_names(), ["a", "b", "c"]);
    }

    #[test]
    fn duplicate_tools_rejected() {
        let mut r = ToolRouter::new();
        r.attach(McpClient::connect(Box::new(InProcess::new(server("one", &["a"])))).unwrap())
            .unwrap();
        let dup = McpClient::connect(Box::new(InProcess::new(server("two", &["a"])))).unwrap();
        assert!(matches!(
            r.attach(dup),
            Err(ClientError::DuplicateTool { .. })
        ));
    }
}
