//! Run manifests: what a command read, wrote and was configured with.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = std::fs::File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 64 * 1024];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hex::encode(hasher.finalize()))
}

/// Hash of the compact JSON form. Object keys serialize in sorted order, so
/// equal configurations hash equally.
pub fn config_hash<T: Serialize>(config: &T) -> String {
    let value = serde_json::to_value(config).expect("config serializes");
    sha256_bytes(value.to_string().as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Ok,
    Partial,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

impl FileDigest {
    /// `path` is read relative to `root` and recorded as given.
    pub fn of(root: &Path, path: &str) -> std::io::Result<Self> {
        let full = root.join(path);
        Ok(Self {
            path: path.to_string(),
            sha256: sha256_file(&full)?,
            bytes: std::fs::metadata(&full)?.len(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub started_at: DateTime<Utc>,
    pub finished_at: Option<DateTime<Utc>>,
    pub status: RunStatus,
    /// Method choices worth knowing when reading the outputs.
    pub notes: Vec<String>,
    pub errors: Vec<String>,
}

impl RunManifest {
    pub fn new<T: Serialize>(
        command: &str,
        tool_version: &str,
        config: &T,
        started_at: DateTime<Utc>,
    ) -> Self {
        Self {
            command: command.to_string(),
            tool_version: tool_version.to_string(),
            config_hash: config_hash(config),
            config: serde_json::to_value(config).expect("config serializes"),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at,
            finished_at: None,
            status: RunStatus::Ok,
            notes: Vec::new(),
            errors: Vec::new(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, root: &Path, path: &str) -> std::io::Result<()> {
        self.inputs.push(FileDigest::of(root, path)?);
        Ok(())
    }

    pub fn output(&mut self, root: &Path, path: &str) -> std::io::Result<()> {
        self.outputs.push(FileDigest::of(root, path)?);
        Ok(())
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Records a non-fatal error and downgrades the status to partial.
    pub fn error(&mut self, error: impl Into<String>) {
        self.errors.push(error.into());
        if self.status == RunStatus::Ok {
            self.status = RunStatus::Partial;
        }
    }

    pub fn finish(&mut self, at: DateTime<Utc>) {
        self.finished_at = Some(at);
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> std::io::Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_and_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "abc").unwrap();
        assert_eq!(
            sha256_file(&dir.path().join("a.txt")).unwrap(),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let t = DateTime::<Utc>::from_timestamp(0, 0).unwrap();
        let mut m = RunManifest::new("split", "0.1.0", &serde_json::json!({"b": 1, "a": 2}), t);
        m.seed("split", 7);
        m.input(dir.path(), "a.txt").unwrap();
        m.error("one record failed");
        m.finish(t);
        assert_eq!(m.status, RunStatus::Partial);
        let path = dir.path().join("m.json");
        m.write(&path).unwrap();
        assert_eq!(RunManifest::load(&path).unwrap(), m);
        assert!(m.input(dir.path(), "missing").is_err());
    }

    #[test]
    fn config_hash_ignores_key_order() {
        let a: serde_json::Value = serde_json::from_str(r#"{"x":1,"y":[1,2]}"#).unwrap();
        let b: serde_json::Value = serde_json::from_str(r#"{"y":[1,2],"x":1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
    }
}
