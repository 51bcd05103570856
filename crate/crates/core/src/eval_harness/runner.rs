use serde::{Deserialize, Serialize};

use super::{
    extract_label, EvalCase, EvalTask, ExtractionTrace, GenerateRequest, ModelEndpoint,
    PromptDialect, TaskKind,
};
use crate::llm_gateway::{map_bounded, ChatMessage};

/// Spelling of a missing label in stored transcripts.
pub const INVALID: &str = "Invalid";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub phase1_max_new_tokens: u32,
    pub phase2_max_new_tokens: u32,
    pub parallelism: usize,
    /// Inserted between the phase-1 text and the continuation cue.
    pub cue_separator: String,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            phase1_max_new_tokens: 500,
            phase2_max_new_tokens: 300,
            parallelism: 1,
            cue_separator: "\n".into(),
        }
    }
}

mod label_or_invalid {
    use serde::{Deserialize, Deserializer, Serializer};

    use super::INVALID;

    pub fn serialize<S: Serializer>(v: &Option<String>, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(v.as_deref().unwrap_or(INVALID))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<String>, D::Error> {
        let s = String::deserialize(d)?;
        Ok((s != INVALID).then_some(s))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationTranscript {
    pub image_id: String,
    pub task: TaskKind,
    pub endpoint_id: String,
    pub dialect: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub instruction: String,
    /// `instruction` after the dialect wrapper, as sent.
    pub prompt: String,
    pub phase1_text: String,
    pub continuation_cue: String,
    pub phase2_text: String,
    #[serde(with = "label_or_invalid")]
    pub extracted_label: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extraction_trace: Option<ExtractionTrace>,
    pub ambiguity_flag: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground_truth: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint_error: Option<String>,
}

impl GenerationTranscript {
    pub fn is_invalid(&self) -> bool {
        self.extracted_label.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskRun {
    pub task: TaskKind,
    pub endpoint_id: String,
    pub dialect: String,
    pub transcripts: Vec<GenerationTranscript>,
    /// Cases without ground truth for this task.
    pub skipped: Vec<String>,
}

impl TaskRun {
    pub fn errors(&self) -> usize {
        self.transcripts
            .iter()
            .filter(|t| t.endpoint_error.is_some())
            .count()
    }
}

fn run_case(
    case: &EvalCase,
    truth: String,
    task: &dyn EvalTask,
    endpoint: &dyn ModelEndpoint,
    dialect: &dyn PromptDialect,
    cfg: &EvalConfig,
) -> GenerationTranscript {
    let instruction = task.instruction().to_string();
    let prompt = dialect.wrap(&instruction);
    let system_prompt = dialect.system_prompt();
    let mut t = GenerationTranscript {
        image_id: case.image_id.clone(),
        task: task.kind(),
        endpoint_id: endpoint.id().to_string(),
        dialect: dialect.name().to_string(),
        system_prompt: system_prompt.clone(),
        instruction,
        prompt: prompt.clone(),
        phase1_text: String::new(),
        continuation_cue: task.cue().to_string(),
        phase2_text: String::new(),
        extracted_label: None,
        extraction_trace: None,
        ambiguity_flag: false,
        ground_truth: Some(truth),
        endpoint_error: None,
    };
    let mut request = GenerateRequest {
        image_id: case.image_id.clone(),
        image_b64: None,
        system_prompt,
        messages: vec![ChatMessage::user(prompt)],
        max_new_tokens: cfg.phase1_max_new_tokens,
    };
    match endpoint.generate(&request) {
        Ok(r) => t.phase1_text = r.text,
        Err(e) => {
            t.endpoint_error = Some(format!("phase 1: {e}"));
            return t;
        }
    }
    request.messages.push(ChatMessage::assistant(format!(
        "{}{}{}",
        t.phase1_text, cfg.cue_separator, t.continuation_cue
    )));
    request.max_new_tokens = cfg.phase2_max_new_tokens;
    match endpoint.generate(&request) {
        Ok(r) => t.phase2_text = r.text,
        Err(e) => {
            t.endpoint_error = Some(format!("phase 2: {e}"));
            return t;
        }
    }
    let e = extract_label(&t.phase2_text, task.label_set());
    t.extracted_label = e.label;
    t.extraction_trace = e.trace;
    t.ambiguity_flag = e.ambiguous;
    t
}

/// Runs the two-phase protocol for every case that has ground truth for
/// `task`. Transcripts come back in case order.
pub fn run_task(
    cases: &[EvalCase],
    task: &dyn EvalTask,
    endpoint: &dyn ModelEndpoint,
    dialect: &dyn PromptDialect,
    cfg: &EvalConfig,
) -> TaskRun {
    let mut eligible = Vec::new();
    let mut skipped = Vec::new();
    for c in cases {
        match task.ground_truth(c) {
            Some(truth) => eligible.push((c, truth)),
            None => skipped.push(c.image_id.clone()),
        }
    }
    let transcripts = map_bounded(&eligible, cfg.parallelism, |_, (case, truth)| {
        run_case(case, truth.clone(), task, endpoint, dialect, cfg)
    });
    TaskRun {
        task: task.kind(),
        endpoint_id: endpoint.id().to_string(),
        dialect: dialect.name().to_string(),
        transcripts,
        skipped,
    }
}
