//! Chat backends. Every agent call goes through [`llm_chat`].

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::message::{ChatMessage, Role};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BackendError {
    #[error("request must be non-empty and start with a system message")]
    InvalidRequest,
    #[error("backend timed out")]
    Timeout,
    #[error("backend transport error: {0}")]
    Transport(String),
    #[error("backend reply unusable: {0}")]
    BadReply(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    ScriptedMock,
    HttpChat,
}

pub trait ChatBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    /// One agent-role reply to `messages`.
    fn chat(&self, messages: &[ChatMessage]) -> Result<ChatMessage, BackendError>;
}

/// Checks the request shape, then asks the backend.
pub fn llm_chat(backend: &dyn ChatBackend, messages: &[ChatMessage]) -> Result<ChatMessage, BackendError> {
    match messages.first() {
        Some(m) if m.role == Role::System => {}
        _ => return Err(BackendError::InvalidRequest),
    }
    let mut reply = backend.chat(messages)?;
    reply.role = Role::Agent;
    Ok(reply)
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    stream: bool,
}

#[derive(Deserialize)]
struct WireReplyMessage {
    content: String,
}

#[derive(Deserialize)]
struct WireReply {
    message: WireReplyMessage,
}

fn wire_role(r: Role) -> &'static str {
    match r {
        Role::System => "system",
        Role::Agent => "assistant",
        // Task payloads travel as user turns; not every server accepts a
        // bare "tool" role without a preceding tool call.
        Role::Operator | Role::Tool => "user",
    }
}

/// Non-streaming chat endpoint speaking `{model, messages, stream:false}`
/// → `{message:{role, content}}`. Transport failures are retried once.
pub struct HttpChat {
    endpoint: String,
    model: String,
    client: reqwest::blocking::Client,
}

impl HttpChat {
    pub fn new(endpoint: impl Into<String>, model: impl Into<String>, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            endpoint: endpoint.into(),
            model: model.into(),
            client,
        })
    }

    fn once(&self, messages: &[ChatMessage]) -> Result<String, BackendError> {
        let body = WireRequest {
            model: &self.model,
            messages: messages
                .iter()
                .map(|m| WireMessage {
                    role: wire_role(m.role),
                    content: &m.content,
                })
                .collect(),
            stream: false,
        };
        let resp = self.client.post(&self.endpoint).json(&body).send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.is_server_error() {
            return Err(BackendError::Transport(format!("status {status}")));
        }
        if !status.is_success() {
            return Err(BackendError::BadReply(format!("status {status}")));
        }
        let reply: WireReply = resp.json().map_err(|e| BackendError::BadReply(e.to_string()))?;
        Ok(reply.message.content)
    }
}

impl ChatBackend for HttpChat {
    fn kind(&self) -> BackendKind {
        BackendKind::HttpChat
    }

    fn chat(&self, messages: &[ChatMessage]) -> Result<ChatMessage, BackendError> {
        let t = messages.last().map_or(0.0, |m| m.t);
        let content = match self.once(messages) {
            Err(BackendError::Timeout | BackendError::Transport(_)) => self.once(messages)?,
            other => other?,
        };
        Ok(ChatMessage::new(Role::Agent, content, t))
    }
}
