use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::{Backend, BackendError, HttpChatBackend, HttpChatConfig, MockScript, ScriptedMock};

/// A backend as written in configuration: an id, the factory kind that
/// builds it, and kind-specific options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendSpec {
    pub id: String,
    pub kind: String,
    #[serde(flatten)]
    pub options: Map<String, Value>,
}

impl BackendSpec {
    fn options_as<T: for<'de> Deserialize<'de>>(&self) -> Result<T, BackendError> {
        serde_json::from_value(Value::Object(self.options.clone()))
            .map_err(|e| BackendError::Config(format!("backend '{}': {e}", self.id)))
    }
}

pub trait BackendFactory: Send + Sync {
    fn kind(&self) -> &str;

    /// `base_dir` resolves relative paths in the options.
    fn build(&self, spec: &BackendSpec, base_dir: &Path) -> Result<Arc<dyn Backend>, BackendError>;
}

struct MockFactory;

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct MockOptions {
    #[serde(default)]
    script: Option<PathBuf>,
    #[serde(default)]
    inline: Option<MockScript>,
}

impl BackendFactory for MockFactory {
    fn kind(&self) -> &str {
        "mock"
    }

    fn build(&self, spec: &BackendSpec, base_dir: &Path) -> Result<Arc<dyn Backend>, BackendError> {
        let opts: MockOptions = spec.options_as()?;
        let script = match (opts.script, opts.inline) {
            (Some(p), None) => MockScript::load(&base_dir.join(p))?,
            (None, Some(s)) => s,
            _ => {
                return Err(BackendError::Config(format!(
                    "backend '{}': mock needs exactly one of 'script' or 'inline'",
                    spec.id
                )))
            }
        };
        Ok(Arc::new(ScriptedMock::new(spec.id.clone(), script)))
    }
}

struct HttpFactory;

impl BackendFactory for HttpFactory {
    fn kind(&self) -> &str {
        "http"
    }

    fn build(
        &self,
        spec: &BackendSpec,
        _base_dir: &Path,
    ) -> Result<Arc<dyn Backend>, BackendError> {
        let cfg: HttpChatConfig = spec.options_as()?;
        Ok(Arc::new(HttpChatBackend::new(spec.id.clone(), cfg)?))
    }
}

/// Backend factories keyed by kind.
pub struct BackendRegistry {
    factories: BTreeMap<String, Box<dyn BackendFactory>>,
}

impl Default for BackendRegistry {
    fn default() -> Self {
        let mut r = Self::empty();
        r.register(Box::new(MockFactory));
        r.register(Box::new(HttpFactory));
        r
    }
}

impl BackendRegistry {
    pub fn empty() -> Self {
        Self {
            factories: BTreeMap::new(),
        }
    }

    pub fn register(&mut self, factory: Box<dyn BackendFactory>) {
        self.factories.insert(factory.kind().to_string(), factory);
    }

    pub fn kinds(&self) -> impl Iterator<Item = &str> {
        self.factories.keys().map(String::as_str)
    }

    pub fn build(
        &self,
        spec: &BackendSpec,
        base_dir: &Path,
    ) -> Result<Arc<dyn Backend>, BackendError> {
        let factory = self.factories.get(&spec.kind).ok_or_else(|| {
            BackendError::Config(format!(
                "backend '{}': unknown kind '{}' (known: {})",
                spec.id,
                spec.kind,
                self.kinds().collect::<Vec<_>>().join(", ")
            ))
        })?;
        factory.build(spec, base_dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm_gateway::ChatRequest;

    fn spec(json: &str) -> BackendSpec {
        serde_json::from_str(json).unwrap()
    }

    #[test]
    fn builds_inline_mock() {
        let s = spec(
            r#"{"id":"m1","kind":"mock","inline":{"rules":[{"contains":["hi"],"response":"hello"}]}}"#,
        );
        let b = BackendRegistry::default()
            .build(&s, Path::new("."))
            .unwrap();
        assert_eq!(b.id(), "m1");
        assert_eq!(b.send(&ChatRequest::single("hi", 5)).unwrap().text, "hello");
    }

    #[test]
    fn builds_mock_from_relative_script() {
        let dir = tempfile::tempdir().unwrap();
        let script = MockScript::default().with_entry("p", "r");
        std::fs::write(
            dir.path().join("s.json"),
            serde_json::to_string(&script).unwrap(),
        )
        .unwrap();
        let s = spec(r#"{"id":"m","kind":"mock","script":"s.json"}"#);
        let b = BackendRegistry::default().build(&s, dir.path()).unwrap();
        assert_eq!(b.send(&ChatRequest::single("p", 5)).unwrap().text, "r");
    }

    #[test]
    fn builds_http_backend() {
        let s = spec(r#"{"id":"gpt","kind":"http","base_url":"http://localhost:1","model":"x"}"#);
        assert_eq!(
            BackendRegistry::default()
                .build(&s, Path::new("."))
                .unwrap()
                .id(),
            "gpt"
        );
    }

    #[test]
    fn unknown_kind_lists_known() {
        let s = spec(r#"{"id":"z","kind":"carrier-pigeon"}"#);
        let err = BackendRegistry::default()
            .build(&s, Path::new("."))
            .err()
            .unwrap();
        assert!(err.to_string().contains("known: http, mock"), "{err}");
    }
}
