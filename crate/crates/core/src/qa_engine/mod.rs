//! Turns raw generation transcripts into curriculum datasets.

mod assemble;
mod parser;
mod validate;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::promptgen::CurriculumPart;

pub use assemble::{
    assemble, load_dataset, write_dataset, AssembleOptions, Assembly, AssemblyReport,
    CurriculumDataset, DatasetStats,
};
pub use parser::{
    parse_numbered_qa, render_numbered_qa, Diagnostic, DiagnosticKind, ParsedQa, RawPair,
    NO_STAGE_SENTINEL,
};
pub use validate::{
    forbidden_hits, validate_pairs, RejectReason, Rejected, Validated, ValidationOptions,
};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaPair {
    pub image_id: String,
    pub question: String,
    pub answer: String,
    pub template_id: String,
    pub curriculum_part: CurriculumPart,
    /// 1-based position among the accepted pairs of its transcript.
    pub ordinal: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub flags: Vec<String>,
}

#[derive(Debug, Error)]
pub enum QaError {
    #[error("transcripts reference unknown images: {}", .0.join(", "))]
    UnknownImages(Vec<String>),
    #[error("transcripts reference unknown templates: {}", .0.join(", "))]
    UnknownTemplates(Vec<String>),
    #[error("transcript for {image_id} uses template {template_id} of part {template_part}, expected part {expected}")]
    PartMismatch {
        image_id: String,
        template_id: String,
        template_part: CurriculumPart,
        expected: CurriculumPart,
    },
    #[error(transparent)]
    Jsonl(#[from] crate::JsonlError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
