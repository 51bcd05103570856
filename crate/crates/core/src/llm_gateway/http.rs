use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{Backend, BackendError, BackendReply, ChatRequest, FinishReason};

fn default_path() -> String {
    "/v1/chat/completions".to_string()
}

fn default_timeout() -> u64 {
    120
}

fn default_max_tokens_field() -> String {
    "max_tokens".to_string()
}

/// Connection settings for a chat-completions style endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpChatConfig {
    pub base_url: String,
    #[serde(default = "default_path")]
    pub path: String,
    pub model: String,
    /// Name of the environment variable holding a bearer token. `None` for
    /// unauthenticated endpoints.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_tokens_field")]
    pub max_tokens_field: String,
}

impl HttpChatConfig {
    pub fn new(base_url: impl Into<String>, model: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: default_path(),
            model: model.into(),
            api_key_env: None,
            timeout_secs: default_timeout(),
            max_tokens_field: default_max_tokens_field(),
        }
    }

    pub fn url(&self) -> String {
        format!(
            "{}/{}",
            self.base_url.trim_end_matches('/'),
            self.path.trim_start_matches('/')
        )
    }
}

pub struct HttpChatBackend {
    id: String,
    config: HttpChatConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpChatBackend {
    pub fn new(id: impl Into<String>, config: HttpChatConfig) -> Result<Self, BackendError> {
        let api_key = match &config.api_key_env {
            Some(var) => Some(std::env::var(var).map_err(|_| {
                BackendError::Config(format!(
                    "credential missing: environment variable {var} is not set"
                ))
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Config(format!("cannot build HTTP client: {e}")))?;
        Ok(Self {
            id: id.into(),
            config,
            api_key,
            client,
        })
    }

    /// Request body in chat-completions form.
    pub fn request_body(&self, request: &ChatRequest) -> Value {
        let mut messages = Vec::with_capacity(request.messages.len() + 1);
        if let Some(sys) = &request.system_prompt {
            messages.push(json!({"role": "system", "content": sys}));
        }
        for m in &request.messages {
            messages.push(json!({"role": m.role.as_str(), "content": m.content}));
        }
        let mut body = json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.temperature,
        });
        body[self.config.max_tokens_field.as_str()] = json!(request.max_new_tokens);
        body
    }
}

pub(crate) fn parse_completion(body: &Value) -> Result<BackendReply, BackendError> {
    let choice = body
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Protocol("missing choices[0]".into()))?;
    let text = choice
        .pointer("/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| BackendError::Protocol("missing choices[0].message.content".into()))?;
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    Ok(BackendReply {
        text: text.to_string(),
        finish_reason,
        error: None,
    })
}

impl Backend for HttpChatBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let mut req = self
            .client
            .post(self.config.url())
            .json(&self.request_body(request));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req
            .send()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(BackendError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        let body: Value =
            serde_json::from_str(&text).map_err(|e| BackendError::Protocol(e.to_string()))?;
        parse_completion(&body)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::ChatMessage;

    #[test]
    fn body_shape() {
        let backend =
            HttpChatBackend::new("gpt", HttpChatConfig::new("http://localhost:1/", "m1")).unwrap();
        let mut req = ChatRequest::single("hello", 42);
        req.system_prompt = Some("sys".into());
        req.messages.push(ChatMessage::assistant("cont"));
        let body = backend.request_body(&req);
        assert_eq!(
            body,
            json!({
                "model": "m1",
                "messages": [
                    {"role": "system", "content": "sys"},
                    {"role": "user", "content": "hello"},
                    {"role": "assistant", "content": "cont"}
                ],
                "max_tokens": 42,
                "temperature": 0.0
            })
        );
    }

    #[test]
    fn url_joins_cleanly() {
        assert_eq!(
            HttpChatConfig::new("http://h:8/", "m").url(),
            "http://h:8/v1/chat/completions"
        );
    }

    #[test]
    fn missing_credential_is_config_error() {
        let mut cfg = HttpChatConfig::new("http://h", "m");
        cfg.api_key_env = Some("SVQA_TEST_SURELY_UNSET_VAR".into());
        match HttpChatBackend::new("x", cfg) {
            Err(BackendError::Config(msg)) => assert!(msg.contains("credential missing")),
            Err(other) => panic!("unexpected error {other}"),
            Ok(_) => panic!("expected configuration error"),
        }
    }

    #[test]
    fn completion_parsing() {
        let ok = json!({"choices": [{"message": {"role": "assistant", "content": "hi"}, "finish_reason": "length"}]});
        let r = parse_completion(&ok).unwrap();
        assert_eq!(r.text, "hi");
        assert_eq!(r.finish_reason, FinishReason::Length);
        assert!(parse_completion(&json!({"choices": []})).is_err());
    }

    #[test]
    fn unreachable_host_is_transport_error() {
        let backend =
            HttpChatBackend::new("x", HttpChatConfig::new("http://127.0.0.1:9", "m")).unwrap();
        let err = backend.send(&ChatRequest::single("hi", 5)).unwrap_err();
        assert!(err.is_retryable(), "{err}");
    }
}
