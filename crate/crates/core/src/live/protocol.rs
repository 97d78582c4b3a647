//! Wire messages. Every message is one JSON text frame with a `type` tag
//! and a `v` schema version.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::envs::Action;

pub const PROTOCOL_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionMode {
    /// Scripted oracle (or nobody) supervises.
    Oracle,
    /// A connected human holds control.
    Live,
    Paused,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub psi: f64,
    pub success_rate_latest: Option<f64>,
    pub human_data_usage: u64,
}

/// Sent once per applied environment step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMsg {
    pub v: u32,
    pub step: u64,
    pub env_render: serde_json::Value,
    /// The novice proposal.
    pub agent_action: Action,
    /// What was actually applied.
    pub applied_action: Action,
    pub intervened: bool,
    pub done: bool,
    pub metrics: FrameMetrics,
}

/// Sent before action selection in lockstep sessions, so the supervisor
/// can judge the proposal before it is applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProposalMsg {
    pub v: u32,
    pub step: u64,
    pub env_render: serde_json::Value,
    pub agent_action: Action,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusMsg {
    pub v: u32,
    pub mode: SessionMode,
    pub connected_clients: usize,
    /// Whether the receiving client currently holds control.
    pub controlling: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMsg {
    pub v: u32,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ServerMsg {
    Frame(FrameMsg),
    Proposal(ProposalMsg),
    Status(StatusMsg),
    Error(ErrorMsg),
}

/// Takeover request. While `active` the client streams one action per frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionMsg {
    pub v: u32,
    pub active: bool,
    #[serde(default)]
    pub action: Option<Action>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ControlMsg {
    pub v: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ClientMsg {
    Intervene(InterventionMsg),
    Pause(ControlMsg),
    Resume(ControlMsg),
}

impl ClientMsg {
    pub fn intervene(action: Option<Action>) -> Self {
        ClientMsg::Intervene(InterventionMsg {
            v: PROTOCOL_VERSION,
            active: action.is_some(),
            action,
        })
    }

    fn version(&self) -> u32 {
        match self {
            ClientMsg::Intervene(m) => m.v,
            ClientMsg::Pause(m) | ClientMsg::Resume(m) => m.v,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ProtocolError {
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}, expected {PROTOCOL_VERSION}")]
    Version(u32),
}

pub fn parse_client_msg(text: &str) -> Result<ClientMsg, ProtocolError> {
    let msg: ClientMsg = serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    if msg.version() != PROTOCOL_VERSION {
        return Err(ProtocolError::Version(msg.version()));
    }
    Ok(msg)
}

pub fn parse_server_msg(text: &str) -> Result<ServerMsg, ProtocolError> {
    serde_json::from_str(text).map_err(|e| ProtocolError::Malformed(e.to_string()))
}

pub fn encode<T: Serialize>(msg: &T) -> String {
    serde_json::to_string(msg).expect("protocol messages always serialize")
}

pub fn error_text(message: impl Into<String>) -> String {
    encode(&ServerMsg::Error(ErrorMsg {
        v: PROTOCOL_VERSION,
        message: message.into(),
    }))
}
