//! Report and image-metadata data model.
//!
//! Tabular reports are synthesized from cluster labels plus demographics;
//! specialist reports are free text written by a named author. Both arrive
//! as JSONL and are validated record by record on ingest.

mod ingest;
mod sampling;
mod schema;
mod split;

use std::collections::BTreeMap;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ingest::{
    ingest_reports, ingest_specialist, ingest_tabular, parse_specialist_jsonl, parse_tabular_jsonl,
    Ingested, IngestedReports, ReportKind,
};
pub use sampling::{
    sample_absent_biomarkers, synthesize_tabular_reports, ClusterLabels, ClusteredImage,
};
pub use schema::{BiomarkerEntry, BiomarkerSchema, DEMOGRAPHIC_FIELDS};
pub use split::{make_splits, Split, SplitAssignment, SplitCounts, SplitFractions};

use crate::JsonlError;

/// Number of biomarkers a tabular report states as not present.
pub const ABSENT_COUNT: usize = 3;

pub const DEFAULT_HEIGHT_PX: u32 = 416;
pub const DEFAULT_WIDTH_PX: u32 = 512;
pub const DEFAULT_PIXEL_AXIAL_UM: f64 = 3.5;
pub const DEFAULT_PIXEL_LATERAL_UM: f64 = 11.7;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error(transparent)]
    Jsonl(#[from] JsonlError),
    #[error("invalid biomarker schema: {0}")]
    InvalidSchema(String),
    #[error("unknown biomarker '{0}'")]
    UnknownBiomarker(String),
    #[error("insufficient candidates: {available} absent candidates, {needed} required")]
    InsufficientCandidates { available: usize, needed: usize },
    #[error("corpus has zero patients")]
    NoPatients,
    #[error("split fractions must be nonnegative and sum to 1 (got {0})")]
    BadFractions(f64),
    #[error("duplicate image_id '{0}'")]
    DuplicateImage(String),
    #[error("image '{image_id}' has no cluster labels for cluster {cluster_id}")]
    MissingCluster { image_id: String, cluster_id: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageMeta {
    pub image_id: String,
    pub patient_id: String,
    pub eye_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acquisition_date: Option<NaiveDate>,
    #[serde(default = "default_height")]
    pub height_px: u32,
    #[serde(default = "default_width")]
    pub width_px: u32,
    #[serde(default = "default_axial")]
    pub pixel_size_axial_um: f64,
    #[serde(default = "default_lateral")]
    pub pixel_size_lateral_um: f64,
}

fn default_height() -> u32 {
    DEFAULT_HEIGHT_PX
}
fn default_width() -> u32 {
    DEFAULT_WIDTH_PX
}
fn default_axial() -> f64 {
    DEFAULT_PIXEL_AXIAL_UM
}
fn default_lateral() -> f64 {
    DEFAULT_PIXEL_LATERAL_UM
}

impl ImageMeta {
    pub fn new(
        image_id: impl Into<String>,
        patient_id: impl Into<String>,
        eye_id: impl Into<String>,
    ) -> Self {
        Self {
            image_id: image_id.into(),
            patient_id: patient_id.into(),
            eye_id: eye_id.into(),
            acquisition_date: None,
            height_px: DEFAULT_HEIGHT_PX,
            width_px: DEFAULT_WIDTH_PX,
            pixel_size_axial_um: DEFAULT_PIXEL_AXIAL_UM,
            pixel_size_lateral_um: DEFAULT_PIXEL_LATERAL_UM,
        }
    }
}

/// Images keyed by id. Construction rejects duplicate ids, which also
/// guarantees each image maps to exactly one patient.
#[derive(Debug, Clone, Default)]
pub struct ImageIndex {
    images: BTreeMap<String, ImageMeta>,
}

impl ImageIndex {
    pub fn new(images: impl IntoIterator<Item = ImageMeta>) -> Result<Self, CorpusError> {
        let mut map = BTreeMap::new();
        for img in images {
            if map.contains_key(&img.image_id) {
                return Err(CorpusError::DuplicateImage(img.image_id));
            }
            map.insert(img.image_id.clone(), img);
        }
        Ok(Self { images: map })
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        Self::new(crate::read_jsonl::<ImageMeta>(path)?)
    }

    pub fn get(&self, image_id: &str) -> Option<&ImageMeta> {
        self.images.get(image_id)
    }

    pub fn contains(&self, image_id: &str) -> bool {
        self.images.contains_key(image_id)
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ImageMeta> {
        self.images.values()
    }

    pub fn to_vec(&self) -> Vec<ImageMeta> {
        self.images.values().cloned().collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sex {
    Female,
    Male,
}

impl Sex {
    pub fn as_str(self) -> &'static str {
        match self {
            Sex::Female => "female",
            Sex::Male => "male",
        }
    }
}

/// Structured annotation of one image, seeded from cluster labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularReport {
    pub image_id: String,
    pub patient_id: String,
    #[serde(rename = "present")]
    pub present_biomarkers: Vec<String>,
    #[serde(rename = "absent")]
    pub absent_biomarkers: Vec<String>,
    #[serde(rename = "age", default, skip_serializing_if = "Option::is_none")]
    pub age_years: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sex: Option<Sex>,
    #[serde(
        rename = "va_letters",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub visual_acuity_letters: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnosis: Option<String>,
    /// Filled from the schema the record was validated against.
    #[serde(skip)]
    pub schema_version: String,
}

impl TabularReport {
    pub fn validate(&self, schema: &BiomarkerSchema) -> Result<(), String> {
        if self.image_id.trim().is_empty() {
            return Err("empty image_id".into());
        }
        if self.absent_biomarkers.len() != ABSENT_COUNT {
            return Err(format!(
                "absent list must hold exactly {ABSENT_COUNT} biomarkers, found {}",
                self.absent_biomarkers.len()
            ));
        }
        let mut seen = std::collections::BTreeSet::new();
        for name in self
            .present_biomarkers
            .iter()
            .chain(&self.absent_biomarkers)
        {
            if !schema.contains(name) {
                return Err(CorpusError::UnknownBiomarker(name.clone()).to_string());
            }
            if !seen.insert(name.as_str()) {
                if self.present_biomarkers.contains(name) && self.absent_biomarkers.contains(name) {
                    return Err(format!("biomarker '{name}' is both present and absent"));
                }
                return Err(format!("biomarker '{name}' listed twice"));
            }
        }
        Ok(())
    }
}

/// Free-text report written by a retinal specialist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecialistReport {
    pub image_id: String,
    pub patient_id: String,
    pub text: String,
    #[serde(rename = "author_years")]
    pub author_experience_years: u32,
    pub author_id: String,
}

impl SpecialistReport {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_id.trim().is_empty() {
            return Err("empty image_id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty report text".into());
        }
        if self.author_experience_years == 0 {
            return Err("author_years must be positive".into());
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(present: &[&str], absent: &[&str]) -> TabularReport {
        TabularReport {
            image_id: "img".into(),
            patient_id: "p".into(),
            present_biomarkers: present.iter().map(|s| s.to_string()).collect(),
            absent_biomarkers: absent.iter().map(|s| s.to_string()).collect(),
            age_years: None,
            sex: None,
            visual_acuity_letters: None,
            diagnosis: None,
            schema_version: String::new(),
        }
    }

    #[test]
    fn image_meta_defaults_match_device() {
        let m: ImageMeta =
            serde_json::from_str(r#"{"image_id":"a","patient_id":"p","eye_id":"e"}"#).unwrap();
        assert_eq!(m.height_px, 416);
        assert_eq!(m.width_px, 512);
        assert_eq!(m.pixel_size_axial_um, 3.5);
        assert_eq!(m.pixel_size_lateral_um, 11.7);
    }

    #[test]
    fn duplicate_image_ids_rejected() {
        let err = ImageIndex::new(vec![
            ImageMeta::new("a", "p1", "e"),
            ImageMeta::new("a", "p2", "e"),
        ])
        .unwrap_err();
        assert!(matches!(err, CorpusError::DuplicateImage(id) if id == "a"));
    }

    #[test]
    fn tabular_validation() {
        let schema = BiomarkerSchema::default();
        assert!(
            report(&["drusen"], &["subretinal fluid", "fibrosis", "atrophy"])
                .validate(&schema)
                .is_ok()
        );
        let e = report(&["drusen"], &["subretinal fluid", "fibrosis"])
            .validate(&schema)
            .unwrap_err();
        assert!(e.contains("exactly 3"));
        let e = report(&["drusen"], &["drusen", "fibrosis", "atrophy"])
            .validate(&schema)
            .unwrap_err();
        assert!(e.contains("both present and absent"));
        let e = report(
            &["unicorn horn"],
            &["subretinal fluid", "fibrosis", "atrophy"],
        )
        .validate(&schema)
        .unwrap_err();
        assert!(e.contains("unknown biomarker"));
    }

    #[test]
    fn specialist_validation() {
        let mut r = SpecialistReport {
            image_id: "i".into(),
            patient_id: "p".into(),
            text: "Large drusen.".into(),
            author_experience_years: 3,
            author_id: "a".into(),
        };
        assert!(r.validate().is_ok());
        r.author_experience_years = 0;
        assert!(r.validate().is_err());
        r.author_experience_years = 3;
        r.text = "  ".into();
        assert!(r.validate().is_err());
    }
}
