//! Two-phase evaluation of a model endpoint on staging, referral and
//! biomarker tasks, with deterministic label extraction.

mod dialect;
mod endpoint;
mod extract;
mod runner;
mod server;
mod tasks;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::guidelines::StageLabel;

pub use dialect::{
    BaselineDialect, DialectRegistry, NativeDialect, PromptDialect, IMAGE_PREAMBLE,
    NATIVE_SYSTEM_PROMPT,
};
pub use endpoint::{
    AdversarialEndpoint, EndpointContext, EndpointFactory, EndpointRegistry, GenerateRequest,
    GenerateResponse, HttpEndpoint, ModelEndpoint, OracleEndpoint,
};
pub use extract::{extract_label, occurrences, Extraction, ExtractionTrace, LabelSet};
pub use runner::{run_task, EvalConfig, GenerationTranscript, TaskRun, INVALID};
pub use server::{serve, ServerHandle};
pub use tasks::{
    BiomarkerTask, EvalTask, ReferralTask, StagingTask, TaskKind, BIOMARKER_CUE_PREFIX,
    REFERRAL_CUE, REPORT_WRITING_INSTRUCTION, STAGING_CUE,
};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid evaluation case {image_id}: {reason}")]
    InvalidCase { image_id: String, reason: String },
    #[error("unknown biomarker '{0}'")]
    UnknownBiomarker(String),
    #[error("unknown task '{0}' (expected staging, referral or biomarker:<name>)")]
    UnknownTask(String),
    #[error("unknown dialect '{0}'")]
    UnknownDialect(String),
    #[error("endpoint configuration error: {0}")]
    EndpointConfig(String),
    #[error("endpoint error: {0}")]
    Endpoint(String),
    #[error("server error: {0}")]
    Server(String),
    #[error(transparent)]
    Jsonl(#[from] crate::JsonlError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Retrospective,
    Referral,
}

/// The three referral recommendations, stored verbatim.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ReferralUrgency {
    #[serde(rename = "within the next two weeks")]
    Urgent,
    #[serde(rename = "within 18 weeks (routine referral)")]
    Routine,
    #[serde(rename = "not be seen")]
    NotSeen,
}

impl ReferralUrgency {
    pub const ALL: [ReferralUrgency; 3] = [Self::Urgent, Self::Routine, Self::NotSeen];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Urgent => "within the next two weeks",
            Self::Routine => "within 18 weeks (routine referral)",
            Self::NotSeen => "not be seen",
        }
    }
}

impl fmt::Display for ReferralUrgency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReferralUrgency {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|u| u.as_str() == s)
            .ok_or_else(|| format!("unknown referral urgency '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Presence {
    Present,
    Absent,
}

impl Presence {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Present => "present",
            Self::Absent => "absent",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BiomarkerTruth {
    pub status: Presence,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grade: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalCase {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_stage: Option<StageLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth_referral: Option<ReferralUrgency>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub biomarker_labels: BTreeMap<String, BiomarkerTruth>,
    pub cohort: Cohort,
}

impl EvalCase {
    pub fn validate(&self) -> Result<(), EvalError> {
        let invalid = |reason: &str| EvalError::InvalidCase {
            image_id: self.image_id.clone(),
            reason: reason.to_string(),
        };
        if self.ground_truth_stage.is_none()
            && self.ground_truth_referral.is_none()
            && self.biomarker_labels.is_empty()
        {
            return Err(invalid("no ground-truth field populated"));
        }
        if self.cohort == Cohort::Referral && self.ground_truth_referral.is_none() {
            return Err(invalid("referral cohort case lacks a referral label"));
        }
        Ok(())
    }
}

pub fn load_cases(path: &std::path::Path) -> Result<Vec<EvalCase>, EvalError> {
    let cases: Vec<EvalCase> = crate::read_jsonl(path)?;
    for c in &cases {
        c.validate()?;
    }
    Ok(cases)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn urgency_serializes_verbatim() {
        for u in ReferralUrgency::ALL {
            assert_eq!(
                serde_json::to_string(&u).unwrap(),
                format!("\"{}\"", u.as_str())
            );
            assert_eq!(u.as_str().parse::<ReferralUrgency>().unwrap(), u);
        }
    }

    #[test]
    fn case_validation() {
        let mut c = EvalCase {
            image_id: "x".into(),
            ground_truth_stage: None,
            ground_truth_referral: None,
            biomarker_labels: BTreeMap::new(),
            cohort: Cohort::Retrospective,
        };
        assert!(c.validate().is_err());
        c.ground_truth_stage = Some(StageLabel::Early);
        assert!(c.validate().is_ok());
        c.cohort = Cohort::Referral;
        assert!(c.validate().is_err());
        c.ground_truth_referral = Some(ReferralUrgency::Routine);
        assert!(c.validate().is_ok());
    }

    #[test]
    fn case_json_shape() {
        let json = r#"{"image_id":"a","ground_truth_stage":"late wet (active)","biomarker_labels":{"subretinal fluid":{"status":"present","grade":"severe"}},"cohort":"retrospective"}"#;
        let c: EvalCase = serde_json::from_str(json).unwrap();
        assert_eq!(c.ground_truth_stage, Some(StageLabel::LateWetActive));
        assert_eq!(
            c.biomarker_labels["subretinal fluid"].grade.as_deref(),
            Some("severe")
        );
        assert_eq!(serde_json::to_string(&c).unwrap(), json);
    }
}
