use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, Utc};
use serde::Serialize;
use svqa_core::corpus::BiomarkerSchema;
use svqa_core::guidelines::GuidelineRegistry;
use svqa_core::manifest::{RunManifest, RunStatus};
use svqa_core::promptgen::TemplateSet;

use crate::config::FileConfig;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// How a command ended when it did not fail outright.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ok,
    /// Some records failed; artifacts and the manifest were still written.
    Partial,
}

/// Resolved global settings shared by every subcommand.
pub struct Ctx {
    pub workdir: PathBuf,
    pub file: FileConfig,
    pub config_path: Option<PathBuf>,
    pub seed: u64,
    pub parallel: usize,
    pub frozen_time: Option<DateTime<Utc>>,
}

impl Ctx {
    pub fn now(&self) -> DateTime<Utc> {
        self.frozen_time.unwrap_or_else(Utc::now)
    }

    pub fn path(&self, rel: impl AsRef<Path>) -> PathBuf {
        self.workdir.join(rel)
    }

    pub fn schema(&self) -> Result<BiomarkerSchema> {
        match &self.file.schema {
            Some(p) => BiomarkerSchema::load(&self.path(p))
                .with_context(|| format!("loading schema {}", p.display())),
            None => Ok(BiomarkerSchema::default()),
        }
    }

    pub fn guidelines(&self) -> Result<GuidelineRegistry> {
        match &self.file.guidelines {
            Some(p) => GuidelineRegistry::load(&self.path(p))
                .with_context(|| format!("loading guidelines {}", p.display())),
            None => Ok(GuidelineRegistry::default()),
        }
    }

    pub fn templates(&self) -> Result<TemplateSet> {
        match &self.file.templates {
            Some(p) => TemplateSet::load_dir(&self.path(p))
                .with_context(|| format!("loading templates {}", p.display())),
            None => Ok(TemplateSet::default()),
        }
    }

    pub fn manifest<T: Serialize>(&self, command: &str, config: &T) -> RunManifest {
        let mut m = RunManifest::new(command, TOOL_VERSION, config, self.now());
        if let Some(p) = &self.config_path {
            let rel = p.strip_prefix(&self.workdir).unwrap_or(p);
            if let Err(e) = m.input(&self.workdir, &rel.to_string_lossy()) {
                log::warn!("cannot digest config file: {e}");
            }
        }
        m
    }

    /// Stamps the end time, writes `manifests/<name>.json` and maps the
    /// manifest status to an outcome.
    pub fn finish(&self, name: &str, mut m: RunManifest) -> Result<Outcome> {
        m.finish(self.now());
        let path = self.path("manifests").join(format!("{name}.json"));
        m.write(&path)
            .with_context(|| format!("writing manifest {}", path.display()))?;
        Ok(match m.status {
            RunStatus::Ok => Outcome::Ok,
            _ => Outcome::Partial,
        })
    }
}

/// Records an input digest, naming the file on failure.
pub fn add_input(m: &mut RunManifest, ctx: &Ctx, rel: &Path) -> Result<()> {
    m.input(&ctx.workdir, &rel.to_string_lossy())
        .with_context(|| format!("reading {}", rel.display()))
}

pub fn add_output(m: &mut RunManifest, ctx: &Ctx, rel: &Path) -> Result<()> {
    m.output(&ctx.workdir, &rel.to_string_lossy())
        .with_context(|| format!("reading back {}", rel.display()))
}

/// Writes pretty JSON with a trailing newline, creating parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    std::fs::write(path, s).with_context(|| format!("writing {}", path.display()))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
