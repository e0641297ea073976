//! Transport-independent MCP server: a tool registry plus JSON-RPC dispatch.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

use super::protocol::{
    failure, is_valid_id, success, RpcError, ToolCallResult, INVALID_PARAMS, INVALID_REQUEST,
    JSONRPC_VERSION, METHOD_NOT_FOUND, PARSE_ERROR, PROTOCOL_VERSION,
};
use crate::lab_model::{describe_field_errors, ParameterSchema};
use crate::tools::roster::Category;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    pub input_schema: ParameterSchema,
    pub category: Category,
    pub requires_approval: bool,
}

impl ToolDescriptor {
    /// The `tools/list` entry for this tool.
    pub fn to_wire(&self) -> Value {
        json!({
            "name": self.name,
            "description": self.description,
            "inputSchema": self.input_schema.to_json_schema(),
            "category": self.category,
            "requiresApproval": self.requires_approval,
        })
    }
}

/// Who is calling and on whose behalf. Travels over the wire in
/// `params._meta` of `tools/call`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CallContext {
    #[serde(default)]
    pub user_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub conversation_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trace_parent: Option<String>,
}

impl CallContext {
    pub fn user(user_id: &str) -> Self {
        Self {
            user_id: user_id.to_string(),
            ..Self::default()
        }
    }
}

/// A tool implementation. `Err` is a tool-level failure reported in-band
/// with `isError: true`.
pub trait ToolHandler: Send + Sync {
    fn call(&self, args: &Map<String, Value>, ctx: &CallContext) -> Result<String, String>;
}

impl<F> ToolHandler for F
where
    F: Fn(&Map<String, Value>, &CallContext) -> Result<String, String> + Send + Sync,
{
    fn call(&self, args: &Map<String, Value>, ctx: &CallContext) -> Result<String, String> {
        self(args, ctx)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistrationError {
    #[error("tool '{0}' is already registered")]
    Duplicate(String),
    #[error("tool '{0}' has a malformed input schema: {1}")]
    Schema(String, String),
}

#[derive(Clone)]
struct Registered {
    descriptor: ToolDescriptor,
    handler: Arc<dyn ToolHandler>,
}

#[derive(Clone)]
pub struct McpServer {
    name: String,
    version: String,
    tools: BTreeMap<String, Registered>,
    /// Registration order, which is also `tools/list` order.
    order: Vec<String>,
    default_context: CallContext,
}

impl McpServer {
    pub fn new(name: &str, version: &str) -> Self {
        Self {
            name: name.to_string(),
            version: version.to_string(),
            tools: BTreeMap::new(),
            order: Vec::new(),
            default_context: CallContext::default(),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    /// Context used when a call carries no `_meta`.
    pub fn set_default_context(&mut self, ctx: CallContext) {
        self.default_context = ctx;
    }

    pub fn register_tool(
        &mut self,
        descriptor: ToolDescriptor,
        handler: Arc<dyn ToolHandler>,
    ) -> Result<(), RegistrationError> {
        if self.tools.contains_key(&descriptor.name) {
            return Err(RegistrationError::Duplicate(descriptor.name));
        }
        descriptor
            .input_schema
            .check_well_formed()
            .map_err(|e| RegistrationError::Schema(descriptor.name.clone(), e.to_string()))?;
        self.order.push(descriptor.name.clone());
        self.tools.insert(
            descriptor.name.clone(),
            Registered {
                descriptor,
                handler,
            },
        );
        Ok(())
    }

    /// Copies every tool of `other` into this server.
    pub fn merge(&mut self, other: &McpServer) -> Result<(), RegistrationError> {
        for name in &other.order {
            let r = &other.tools[name];
            self.register_tool(r.descriptor.clone(), r.handler.clone())?;
        }
        Ok(())
    }

    pub fn descriptors(&self) -> Vec<&ToolDescriptor> {
        self.order
            .iter()
            .map(|n| &self.tools[n].descriptor)
            .collect()
    }

    pub fn descriptor(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.get(name).map(|r| &r.descriptor)
    }

    /// Validates and runs a tool. Schema violations and unknown tools are
    /// protocol errors; handler failures are in-band.
    pub fn call_tool(
        &self,
        name: &str,
        args: &Map<String, Value>,
        ctx: &CallContext,
    ) -> Result<ToolCallResult, RpcError> {
        let Some(tool) = self.tools.get(name) else {
            return Err(RpcError::new(
                INVALID_PARAMS,
                format!("unknown tool '{name}'"),
            ));
        };
        if let Err(errs) = tool.descriptor.input_schema.validate(args) {
            let fields: Vec<Value> = errs
                .iter()
                .map(|e| json!({"field": e.field, "message": e.message}))
                .collect();
            return Err(RpcError::new(
                INVALID_PARAMS,
                format!(
                    "invalid arguments for {name}: {}",
                    describe_field_errors(&errs)
                ),
            )
            .with_data(json!({ "fields": fields })));
        }
        Ok(match tool.handler.call(args, ctx) {
            Ok(text) => ToolCallResult::text(text, false),
            Err(text) => ToolCallResult::text(text, true),
        })
    }

    /// Handles one raw frame. Returns the serialized response, or `None`
    /// for notifications and stray responses.
    pub fn handle_message(&self, raw: &[u8]) -> Option<Vec<u8>> {
        self.handle_value_bytes(raw)
            .map(|v| serde_json::to_vec(&v).expect("json value serializes"))
    }

    fn handle_value_bytes(&self, raw: &[u8]) -> Option<Value> {
        let value: Value = match serde_json::from_slice(raw) {
            Ok(v) => v,
            Err(e) => {
                return Some(failure(
                    Value::Null,
                    RpcError::new(PARSE_ERROR, format!("parse error: {e}")),
                ))
            }
        };
        self.handle_value(value)
    }

    pub fn handle_value(&self, value: Value) -> Option<Value> {
        let Value::Object(msg) = value else {
            return Some(failure(
                Value::Null,
                RpcError::new(INVALID_REQUEST, "message must be a JSON object"),
            ));
        };
        let id = msg.get("id").cloned();
        let reply_id = id.clone().filter(is_valid_id).unwrap_or(Value::Null);
        let invalid = |why: &str| {
            Some(failure(
                reply_id.clone(),
                RpcError::new(INVALID_REQUEST, why.to_string()),
            ))
        };

        if msg.get("jsonrpc").and_then(Value::as_str) != Some(JSONRPC_VERSION) {
            return invalid("jsonrpc must be \"2.0\"");
        }
        if let Some(id) = &id {
            if !is_valid_id(id) {
                return invalid("id must be a number or a string");
            }
        }
        let method = match msg.get("method") {
            Some(Value::String(m)) => m.clone(),
            Some(_) => return invalid("method must be a string"),
            None => {
                // A response addressed to us: well formed iff exactly one of
                // result/error is present. Either way nothing is sent back.
                let has_result = msg.contains_key("result");
                let has_error = msg.contains_key("error");
                if id.is_some() && has_result != has_error {
                    return None;
                }
                return invalid("missing method");
            }
        };
        let params = match msg.get("params") {
            None | Some(Value::Null) => None,
            Some(p @ (Value::Object(_) | Value::Array(_))) => Some(p.clone()),
            Some(_) => return invalid("params must be structured"),
        };

        let Some(id) = id else {
            // Notifications never get a response, whatever they contain.
            return None;
        };
        let outcome = self.dispatch(&method, params);
        Some(match outcome {
            Ok(result) => success(id, result),
            Err(err) => failure(id, err),
        })
    }

    fn dispatch(&self, method: &str, params: Option<Value>) -> Result<Value, RpcError> {
        match method {
            "initialize" => Ok(json!({
                "protocolVersion": PROTOCOL_VERSION,
                "serverInfo": { "name": self.name, "version": self.version },
                "capabilities": { "tools": {} },
            })),
            "ping" => Ok(json!({})),
            "tools/list" => Ok(json!({
                "tools": self.descriptors().iter().map(|d| d.to_wire()).collect::<Vec<_>>(),
            })),
            "tools/call" => {
                let params = match params {
                    Some(Value::Object(p)) => p,
                    _ => {
                        return Err(RpcError::new(
                            INVALID_PARAMS,
                            "tools/call needs an object with name and arguments",
                        ))
                    }
                };
                let name = params.get("name").and_then(Value::as_str).ok_or_else(|| {
                    RpcError::new(INVALID_PARAMS, "tools/call: missing string 'name'")
                })?;
                let args = match params.get("arguments") {
                    None | Some(Value::Null) => Map::new(),
                    Some(Value::Object(a)) => a.clone(),
                    Some(_) => {
                        return Err(RpcError::new(
                            INVALID_PARAMS,
                            "tools/call: 'arguments' must be an object",
                        ))
                    }
                };
                let ctx = match params.get("_meta") {
                    Some(meta) => {
                        serde_json::from_value::<CallContext>(meta.clone()).map_err(|e| {
                            RpcError::new(INVALID_PARAMS, format!("tools/call: bad _meta: {e}"))
                        })?
                    }
                    None => self.default_context.clone(),
                };
                let ctx = if ctx.user_id.is_empty() {
                    CallContext {
                        user_id: self.default_context.user_id.clone(),
                        ..ctx
                    }
                } else {
                    ctx
                };
                let result = self.call_tool(name, &args, &ctx)?;
                Ok(serde_json::to_value(result).expect("tool result serializes"))
            }
            other => Err(RpcError::new(
                METHOD_NOT_FOUND,
                format!("method not found: {other}"),
            )),
        }
    }
}
