use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{EvalCase, EvalError, LabelSet, Presence, ReferralUrgency};
use crate::corpus::BiomarkerSchema;
use crate::guidelines::StageLabel;

const STAGING_INSTRUCTION: &str = include_str!("../../data/instructions/staging.txt");
const REFERRAL_INSTRUCTION: &str = include_str!("../../data/instructions/referral.txt");
const BIOMARKER_INSTRUCTION: &str = include_str!("../../data/instructions/biomarker.txt");
pub const REPORT_WRITING_INSTRUCTION: &str =
    include_str!("../../data/instructions/report_writing.txt");

pub const STAGING_CUE: &str =
    "Based off the image and those findings, the patient's most advanced AMD stage is";
pub const REFERRAL_CUE: &str = "My report indicates that the patient";
pub const BIOMARKER_CUE_PREFIX: &str = "To conclude these findings, in the OCT image";

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum TaskKind {
    Staging,
    Referral,
    Biomarker(String),
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Staging => f.write_str("staging"),
            Self::Referral => f.write_str("referral"),
            Self::Biomarker(b) => write!(f, "biomarker:{b}"),
        }
    }
}

impl FromStr for TaskKind {
    type Err = EvalError;
    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s {
            "staging" => Ok(Self::Staging),
            "referral" => Ok(Self::Referral),
            _ => match s.strip_prefix("biomarker:") {
                Some(b) if !b.trim().is_empty() => Ok(Self::Biomarker(b.trim().to_string())),
                _ => Err(EvalError::UnknownTask(s.to_string())),
            },
        }
    }
}

impl TryFrom<String> for TaskKind {
    type Error = EvalError;
    fn try_from(s: String) -> Result<Self, EvalError> {
        s.parse()
    }
}

impl From<TaskKind> for String {
    fn from(k: TaskKind) -> String {
        k.to_string()
    }
}

impl TaskKind {
    pub fn build(&self, schema: &BiomarkerSchema) -> Result<Box<dyn EvalTask>, EvalError> {
        Ok(match self {
            Self::Staging => Box::new(StagingTask::new()),
            Self::Referral => Box::new(ReferralTask::new()),
            Self::Biomarker(name) => {
                let entry = schema
                    .entry(name)
                    .ok_or_else(|| EvalError::UnknownBiomarker(name.clone()))?;
                Box::new(BiomarkerTask::new(&entry.name, entry.plural))
            }
        })
    }
}

/// One evaluation task: what to ask, how to cue the answer, and which
/// strings count as labels.
pub trait EvalTask: Send + Sync {
    fn kind(&self) -> TaskKind;

    fn instruction(&self) -> &str;

    fn cue(&self) -> &str;

    fn label_set(&self) -> &LabelSet;

    /// Labels in reporting order.
    fn labels(&self) -> Vec<String> {
        self.label_set()
            .labels()
            .into_iter()
            .map(String::from)
            .collect()
    }

    fn ground_truth(&self, case: &EvalCase) -> Option<String>;

    /// Positive class for binary F1, when the task reports one.
    fn positive_label(&self) -> Option<&str> {
        None
    }
}

pub struct StagingTask {
    instruction: String,
    labels: LabelSet,
}

impl StagingTask {
    pub fn new() -> Self {
        Self {
            instruction: STAGING_INSTRUCTION.trim_end().to_string(),
            labels: LabelSet::verbatim(StageLabel::ALL.map(StageLabel::as_str)),
        }
    }
}

impl Default for StagingTask {
    fn default() -> Self {
        Self::new()
    }
}

impl EvalTask for StagingTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Staging
    }

    fn instruction(&self) -> &str {
        &self.instruction
    }

    fn cue(&self) -> &str {
        STAGING_CUE
    }

    fn label_set(&self) -> &LabelSet {
        &self.labels
    }

    fn ground_truth(&self, case: &EvalCase) -> Option<String> {
        case.ground_truth_stage.map(|s| s.as_str().to_string())
    }
}

pub struct ReferralTask {
    instruction: String,
    labels: LabelSet,
}

impl ReferralTask {
    pub fn new() -> Self {
        Self {
            instruction: REFERRAL_INSTRUCTION.trim_end().to_string(),
            labels: LabelSet::verbatim(ReferralUrgency::ALL.map(ReferralUrgency::as_str)),
        }
    }
}

impl Default for ReferralTask {
    fn default() -> Self {
        Self::new()
    }
}

impl EvalTask for ReferralTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Referral
    }

    fn instruction(&self) -> &str {
        &self.instruction
    }

    fn cue(&self) -> &str {
        REFERRAL_CUE
    }

    fn label_set(&self) -> &LabelSet {
        &self.labels
    }

    fn ground_truth(&self, case: &EvalCase) -> Option<String> {
        case.ground_truth_referral.map(|r| r.as_str().to_string())
    }

    fn positive_label(&self) -> Option<&str> {
        Some(ReferralUrgency::Urgent.as_str())
    }
}

pub struct BiomarkerTask {
    name: String,
    instruction: String,
    cue: String,
    labels: LabelSet,
}

impl BiomarkerTask {
    pub fn new(name: &str, plural: bool) -> Self {
        let article = if plural { "are" } else { "is" };
        let instruction = BIOMARKER_INSTRUCTION
            .trim_end()
            .replace("{biomarker}", name)
            .replace("{article}", article);
        Self {
            name: name.to_string(),
            instruction,
            cue: format!("{BIOMARKER_CUE_PREFIX} {name} {article}"),
            labels: LabelSet::new([
                ("present", Presence::Present.as_str()),
                ("not present", Presence::Absent.as_str()),
            ]),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

impl EvalTask for BiomarkerTask {
    fn kind(&self) -> TaskKind {
        TaskKind::Biomarker(self.name.clone())
    }

    fn instruction(&self) -> &str {
        &self.instruction
    }

    fn cue(&self) -> &str {
        &self.cue
    }

    fn label_set(&self) -> &LabelSet {
        &self.labels
    }

    fn ground_truth(&self, case: &EvalCase) -> Option<String> {
        case.biomarker_labels
            .get(&self.name)
            .map(|t| t.status.as_str().to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_round_trip() {
        for s in ["staging", "referral", "biomarker:subretinal fluid"] {
            assert_eq!(s.parse::<TaskKind>().unwrap().to_string(), s);
        }
        assert!("biomarker:".parse::<TaskKind>().is_err());
        assert!("grading".parse::<TaskKind>().is_err());
    }

    #[test]
    fn biomarker_instruction_substitution() {
        let schema = BiomarkerSchema::default();
        let t = TaskKind::Biomarker("drusen".into()).build(&schema).unwrap();
        assert!(t.instruction().contains("drusen are \"not\npresent\""));
        assert!(!t.instruction().contains('{'));
        assert_eq!(
            t.cue(),
            "To conclude these findings, in the OCT image drusen are"
        );
        let t = TaskKind::Biomarker("subretinal fluid".into())
            .build(&schema)
            .unwrap();
        assert!(t.cue().ends_with("subretinal fluid is"));
        assert!(TaskKind::Biomarker("glitter".into())
            .build(&schema)
            .is_err());
    }

    #[test]
    fn label_orders() {
        assert_eq!(StagingTask::new().labels().len(), 6);
        assert_eq!(
            ReferralTask::new().labels(),
            vec![
                "within the next two weeks",
                "within 18 weeks (routine referral)",
                "not be seen"
            ]
        );
        assert_eq!(
            BiomarkerTask::new("drusen", true).labels(),
            vec!["present", "absent"]
        );
    }

    #[test]
    fn instructions_are_verbatim_files() {
        assert!(StagingTask::new()
            .instruction()
            .starts_with("Describe the OCT image in detail"));
        assert!(ReferralTask::new()
            .instruction()
            .contains("D. The Southampton clinic does not need to see"));
    }
}
