//! Uniform client for text-generation backends.
//!
//! A [`Backend`] performs one raw request. The [`Gateway`] wraps any backend
//! with a content-addressed response cache, bounded retries with exponential
//! backoff, and an optional minimum spacing between requests. Backends are
//! constructed by name through a [`BackendRegistry`], so configuration files
//! can select them at runtime.

mod cache;
mod gateway;
mod http;
mod mock;
mod registry;
mod retry;
mod runner;

use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::{CacheEntry, ResponseCache};
pub use gateway::{Gateway, GatewayBuilder, RateLimiter};
pub use http::{HttpChatBackend, HttpChatConfig};
pub use mock::{MockRule, MockScript, ScriptEntry, ScriptedMock};
pub use registry::{BackendFactory, BackendRegistry, BackendSpec};
pub use retry::{RetryPolicy, Sleeper, ThreadSleeper};
pub use runner::{map_bounded, run_jobs, GenerationParams, QaTranscript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub max_new_tokens: u32,
    #[serde(default)]
    pub temperature: f64,
}

impl ChatRequest {
    pub fn single(prompt: impl Into<String>, max_new_tokens: u32) -> Self {
        Self {
            system_prompt: None,
            messages: vec![ChatMessage::user(prompt)],
            max_new_tokens,
            temperature: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        let last = self
            .messages
            .last()
            .ok_or_else(|| BackendError::InvalidRequest("messages must be non-empty".into()))?;
        if last.role == Role::System {
            return Err(BackendError::InvalidRequest(
                "last message must be a user turn or an assistant continuation".into(),
            ));
        }
        if self.max_new_tokens == 0 {
            return Err(BackendError::InvalidRequest(
                "max_new_tokens must be positive".into(),
            ));
        }
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(BackendError::InvalidRequest(
                "temperature must be nonnegative".into(),
            ));
        }
        Ok(())
    }

    /// Content of the final user message, which scripted backends key on.
    pub fn last_user_content(&self) -> Option<&str> {
        self.messages
            .iter()
            .rev()
            .find(|m| m.role == Role::User)
            .map(|m| m.content.as_str())
    }

    /// Canonical JSON: `serde_json` object keys are emitted sorted, and no
    /// field is whitespace-normalized.
    pub fn canonical_json(&self) -> String {
        let value = serde_json::to_value(self).expect("request serializes");
        serde_json::to_string(&value).expect("value serializes")
    }
}

/// SHA-256 hex digest of `text`; the key scripted mocks use for prompts.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

impl fmt::Display for FinishReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Stop => "stop",
            Self::Length => "length",
            Self::Error => "error",
        })
    }
}

/// What a backend returns for one request.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendReply {
    pub text: String,
    pub finish_reason: FinishReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl BackendReply {
    pub fn stop(text: impl Into<String>) -> Self {
        Self {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            error: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub backend_id: String,
    pub latency_ms: u64,
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLog {
    pub attempt: u32,
    pub error: String,
    pub delay_ms: Option<u64>,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum BackendError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed backend response: {0}")]
    Protocol(String),
    #[error("backend failed after {} attempts: {}", .attempts.len(), .attempts.last().map(|a| a.error.as_str()).unwrap_or(""))]
    Exhausted { attempts: Vec<AttemptLog> },
}

impl BackendError {
    /// Transport failures, HTTP 429 and 5xx are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        match self {
            Self::Transport(_) => true,
            Self::Http { status, .. } => *status == 429 || (500..600).contains(status),
            _ => false,
        }
    }
}

/// A text-generation backend. Implementations must be shareable across
/// worker threads.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn send(&self, request: &ChatRequest) -> Result<BackendReply, BackendError>;
}
