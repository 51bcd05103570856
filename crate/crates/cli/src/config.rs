use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context, Result};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use svqa_core::llm_gateway::{BackendSpec, RetryPolicy};
use svqa_core::qa_engine::AssembleOptions;

pub const DEFAULT_CONFIG: &str = "svqa.toml";

/// The config file as written. Every key is optional; flags override it and
/// built-in defaults fill the rest.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub parallel: Option<usize>,
    pub frozen_time: Option<DateTime<Utc>>,
    /// Overrides for the bundled biomarker schema, guidelines and templates.
    pub schema: Option<PathBuf>,
    pub guidelines: Option<PathBuf>,
    pub templates: Option<PathBuf>,
    #[serde(default)]
    pub split: SplitSection,
    #[serde(default)]
    pub backends: Vec<BackendSpec>,
    #[serde(default)]
    pub generation: GenerationSection,
    pub assemble: Option<AssembleOptions>,
    #[serde(default)]
    pub evaluate: EvaluateSection,
    #[serde(default)]
    pub metrics: MetricsSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSection {
    pub train: Option<f64>,
    pub val: Option<f64>,
    pub test: Option<f64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerationSection {
    pub max_new_tokens: Option<u32>,
    pub temperature: Option<f64>,
    pub cache: Option<bool>,
    pub min_interval_ms: Option<u64>,
    pub retry: Option<RetryPolicy>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    pub cases: Option<PathBuf>,
    pub dialect: Option<String>,
    pub phase1_max_new_tokens: Option<u32>,
    pub phase2_max_new_tokens: Option<u32>,
    pub timeout_secs: Option<u64>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub n_resamples: Option<usize>,
    pub level: Option<f64>,
    pub resampler: Option<String>,
    pub seed: Option<u64>,
}

impl FileConfig {
    /// Loads `explicit` if given (it must exist), else `<workdir>/svqa.toml`
    /// when present, else an empty config.
    pub fn load(workdir: &Path, explicit: Option<&Path>) -> Result<(Self, Option<PathBuf>)> {
        let path = match explicit {
            Some(p) => Some(workdir.join(p)),
            None => {
                let p = workdir.join(DEFAULT_CONFIG);
                p.exists().then_some(p)
            }
        };
        let Some(path) = path else {
            return Ok((Self::default(), None));
        };
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        Ok((cfg, Some(path)))
    }

    /// The backend named `id`, or the only configured backend when `id` is
    /// not given.
    pub fn backend(&self, id: Option<&str>) -> Result<&BackendSpec> {
        match id {
            Some(id) => self.backends.iter().find(|b| b.id == id).ok_or_else(|| {
                anyhow!(
                    "backend '{id}' is not defined under config key `backends` (defined: {})",
                    self.backends
                        .iter()
                        .map(|b| b.id.as_str())
                        .collect::<Vec<_>>()
                        .join(", ")
                )
            }),
            None => match self.backends.as_slice() {
                [] => Err(anyhow!(
                    "missing config key `backends`: no generation backend is configured"
                )),
                [only] => Ok(only),
                _ => Err(anyhow!(
                    "several backends are configured under `backends`; choose one with --backend"
                )),
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_backends_with_options() {
        let cfg: FileConfig = toml::from_str(
            r#"
seed = 3
[[backends]]
id = "m"
kind = "mock"
script = "s.json"
"#,
        )
        .unwrap();
        let b = cfg.backend(None).unwrap();
        assert_eq!(b.kind, "mock");
        assert_eq!(b.options["script"], "s.json");
        assert!(cfg
            .backend(Some("x"))
            .unwrap_err()
            .to_string()
            .contains("`backends`"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<FileConfig>("sed = 1").is_err());
        let empty = FileConfig::default();
        assert!(empty
            .backend(None)
            .unwrap_err()
            .to_string()
            .contains("missing config key `backends`"));
    }
}
