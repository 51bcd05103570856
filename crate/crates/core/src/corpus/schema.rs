use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::CorpusError;

const DEFAULT_SCHEMA_JSON: &str = include_str!("../../data/schema.json");

/// Non-biomarker fields every tabular report carries.
pub const DEMOGRAPHIC_FIELDS: [&str; 4] = ["age", "sex", "va_letters", "diagnosis"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiomarkerEntry {
    pub name: String,
    pub plural: bool,
    #[serde(rename = "weight")]
    pub prevalence_weight: f64,
}

/// Ordered biomarker vocabulary with prevalence weights.
#[derive(Debug, Clone, PartialEq)]
pub struct BiomarkerSchema {
    entries: Vec<BiomarkerEntry>,
    version: String,
}

impl BiomarkerSchema {
    pub fn new(
        entries: Vec<BiomarkerEntry>,
        version: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        if entries.len() < 4 {
            return Err(CorpusError::InvalidSchema(format!(
                "at least 4 entries required, found {}",
                entries.len()
            )));
        }
        let mut names = std::collections::BTreeSet::new();
        for e in &entries {
            if e.name.trim().is_empty() {
                return Err(CorpusError::InvalidSchema("empty biomarker name".into()));
            }
            if !names.insert(e.name.as_str()) {
                return Err(CorpusError::InvalidSchema(format!(
                    "duplicate name '{}'",
                    e.name
                )));
            }
            if !(e.prevalence_weight.is_finite() && e.prevalence_weight >= 0.0) {
                return Err(CorpusError::InvalidSchema(format!(
                    "bad weight for '{}'",
                    e.name
                )));
            }
        }
        if entries.iter().all(|e| e.prevalence_weight == 0.0) {
            return Err(CorpusError::InvalidSchema(
                "all prevalence weights are zero".into(),
            ));
        }
        Ok(Self {
            entries,
            version: version.into(),
        })
    }

    /// Parses the schema file format: a JSON array of `{name, plural, weight}`.
    pub fn from_json(text: &str) -> Result<Self, CorpusError> {
        let entries: Vec<BiomarkerEntry> =
            serde_json::from_str(text).map_err(|e| CorpusError::InvalidSchema(e.to_string()))?;
        let digest = hex::encode(Sha256::digest(text.as_bytes()));
        Self::new(entries, format!("schema-{}", &digest[..12]))
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CorpusError::InvalidSchema(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn entries(&self) -> &[BiomarkerEntry] {
        &self.entries
    }

    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn entry(&self, name: &str) -> Option<&BiomarkerEntry> {
        self.entries.iter().find(|e| e.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entry(name).is_some()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.name.as_str())
    }

    /// Biomarker fields plus the demographic fields.
    pub fn field_count(&self) -> usize {
        self.entries.len() + DEMOGRAPHIC_FIELDS.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.entries).expect("schema entries serialize")
    }
}

impl Default for BiomarkerSchema {
    fn default() -> Self {
        Self::from_json(DEFAULT_SCHEMA_JSON).expect("bundled schema is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(name: &str, w: f64) -> BiomarkerEntry {
        BiomarkerEntry {
            name: name.into(),
            plural: false,
            prevalence_weight: w,
        }
    }

    #[test]
    fn default_schema_has_34_fields() {
        let s = BiomarkerSchema::default();
        assert_eq!(s.field_count(), 34);
        assert!(s.contains("subretinal fluid"));
        assert!(s.entry("drusen").unwrap().plural);
    }

    #[test]
    fn rejects_small_duplicate_or_zero_schemas() {
        let e = BiomarkerSchema::new(vec![entry("a", 1.0), entry("b", 1.0), entry("c", 1.0)], "v");
        assert!(e.is_err());
        let e = BiomarkerSchema::new(
            vec![
                entry("a", 1.0),
                entry("a", 1.0),
                entry("c", 1.0),
                entry("d", 1.0),
            ],
            "v",
        );
        assert!(e.is_err());
        let zero = (0..4).map(|i| entry(&i.to_string(), 0.0)).collect();
        assert!(BiomarkerSchema::new(zero, "v").is_err());
        let neg = vec![
            entry("a", -1.0),
            entry("b", 1.0),
            entry("c", 1.0),
            entry("d", 1.0),
        ];
        assert!(BiomarkerSchema::new(neg, "v").is_err());
    }

    #[test]
    fn json_round_trip_keeps_version() {
        let s = BiomarkerSchema::default();
        let again = BiomarkerSchema::from_json(&s.to_json()).unwrap();
        assert_eq!(s.entries(), again.entries());
    }
}
