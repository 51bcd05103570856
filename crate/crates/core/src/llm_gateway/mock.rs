use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, Backend, BackendError, BackendReply, ChatRequest, FinishReason};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptEntry {
    pub prompt_sha256: String,
    pub response: String,
}

/// Fallback rule matched against the final user message when no exact hash
/// entry applies. All `contains` needles must occur and no `not_contains`
/// needle may occur.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub not_contains: Vec<String>,
    pub response: String,
}

impl MockRule {
    fn matches(&self, prompt: &str) -> bool {
        self.contains.iter().all(|n| prompt.contains(n.as_str()))
            && !self
                .not_contains
                .iter()
                .any(|n| prompt.contains(n.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MockScript {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(default)]
    pub rules: Vec<MockRule>,
    /// Inclusive simulated latency range in milliseconds. The delay for a
    /// prompt is a pure function of its hash.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency_ms: Option<(u64, u64)>,
}

impl MockScript {
    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BackendError::Config(format!("cannot read mock script {}: {e}", path.display()))
        })?;
        serde_json::from_str(&text).map_err(|e| {
            BackendError::Config(format!("invalid mock script {}: {e}", path.display()))
        })
    }

    pub fn with_entry(mut self, prompt: &str, response: impl Into<String>) -> Self {
        self.entries.push(ScriptEntry {
            prompt_sha256: prompt_hash(prompt),
            response: response.into(),
        });
        self
    }
}

/// Deterministic backend answering from a fixed script.
#[derive(Debug)]
pub struct ScriptedMock {
    id: String,
    exact: BTreeMap<String, String>,
    rules: Vec<MockRule>,
    latency_ms: Option<(u64, u64)>,
    in_flight: AtomicUsize,
    peak_in_flight: AtomicUsize,
    calls: AtomicUsize,
}

impl ScriptedMock {
    pub fn new(id: impl Into<String>, script: MockScript) -> Self {
        let exact = script
            .entries
            .into_iter()
            .map(|e| (e.prompt_sha256.to_ascii_lowercase(), e.response))
            .collect();
        Self {
            id: id.into(),
            exact,
            rules: script.rules,
            latency_ms: script.latency_ms,
            in_flight: AtomicUsize::new(0),
            peak_in_flight: AtomicUsize::new(0),
            calls: AtomicUsize::new(0),
        }
    }

    /// Highest number of concurrent `send` calls observed.
    pub fn peak_in_flight(&self) -> usize {
        self.peak_in_flight.load(Ordering::SeqCst)
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn lookup(&self, prompt: &str) -> Option<&str> {
        if let Some(r) = self.exact.get(&prompt_hash(prompt)) {
            return Some(r);
        }
        self.rules
            .iter()
            .find(|r| r.matches(prompt))
            .map(|r| r.response.as_str())
    }

    fn simulated_delay(&self, prompt: &str) -> Option<Duration> {
        let (lo, hi) = self.latency_ms?;
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let digest = prompt_hash(prompt);
        let n = u64::from_str_radix(&digest[..12], 16).unwrap_or(0);
        Some(Duration::from_millis(lo + n % (hi - lo + 1)))
    }
}

impl Backend for ScriptedMock {
    fn id(&self) -> &str {
        &self.id
    }

    fn send(&self, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak_in_flight.fetch_max(now, Ordering::SeqCst);
        let prompt = request.last_user_content().unwrap_or("");
        if let Some(d) = self.simulated_delay(prompt) {
            std::thread::sleep(d);
        }
        let reply = match self.lookup(prompt) {
            Some(text) => BackendReply::stop(text),
            None => BackendReply {
                text: String::new(),
                finish_reason: FinishReason::Error,
                error: Some(format!("unscripted prompt {}", prompt_hash(prompt))),
            },
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        Ok(reply)
    }
}
