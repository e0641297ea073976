//! Model Context Protocol surface: JSON-RPC 2.0 handling, the tool
//! registry, stdio framing and a multi-server client.

pub mod client;
pub mod protocol;
pub mod server;
pub mod stdio;

pub use client::{
    ClientError, Http, InProcess, McpClient, RemoteTool, StdioChild, ToolRouter, Transport,
};
pub use protocol::{RpcError, ToolCallResult, PROTOCOL_VERSION};
pub use server::{CallContext, McpServer, RegistrationError, ToolDescriptor, ToolHandler};
pub use stdio::{FrameError, FrameReader, MAX_FRAME_BYTES};
