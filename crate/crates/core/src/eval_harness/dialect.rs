use std::collections::BTreeMap;
use std::sync::Arc;

use super::EvalError;

pub const NATIVE_SYSTEM_PROMPT: &str =
    "You are a helpful ophthalmological specialist chatbot capable of interpreting retinal OCT images.";
pub const IMAGE_PREAMBLE: &str =
    "Here is an encoding of a retinal OCT image <Img><ImageHere></Img>\n";
const BASELINE_TEMPLATE: &str = "You are a helpful medical assistant. You are being provided with images, a question about the image and an answer. Follow the examples and answer the last question. <image>Question: {question} Answer:";

/// How an instruction is packaged for a particular model family.
pub trait PromptDialect: Send + Sync {
    fn name(&self) -> &str;

    fn system_prompt(&self) -> Option<String>;

    /// The user turn carrying `instruction`. Applied exactly once per request.
    fn wrap(&self, instruction: &str) -> String;
}

pub struct NativeDialect;

impl PromptDialect for NativeDialect {
    fn name(&self) -> &str {
        "native"
    }

    fn system_prompt(&self) -> Option<String> {
        Some(NATIVE_SYSTEM_PROMPT.to_string())
    }

    fn wrap(&self, instruction: &str) -> String {
        format!("{IMAGE_PREAMBLE}{instruction}")
    }
}

/// Single-string wrapper used by the general medical baselines.
pub struct BaselineDialect {
    name: String,
}

impl BaselineDialect {
    pub fn new(name: impl Into<String>) -> Self {
        Self { name: name.into() }
    }
}

impl PromptDialect for BaselineDialect {
    fn name(&self) -> &str {
        &self.name
    }

    fn system_prompt(&self) -> Option<String> {
        None
    }

    fn wrap(&self, instruction: &str) -> String {
        BASELINE_TEMPLATE.replacen("{question}", instruction, 1)
    }
}

pub struct DialectRegistry {
    dialects: BTreeMap<String, Arc<dyn PromptDialect>>,
}

impl Default for DialectRegistry {
    fn default() -> Self {
        let mut r = Self {
            dialects: BTreeMap::new(),
        };
        r.register(Arc::new(NativeDialect));
        r.register(Arc::new(BaselineDialect::new("med_flamingo")));
        r.register(Arc::new(BaselineDialect::new("llava_med")));
        r
    }
}

impl DialectRegistry {
    pub fn register(&mut self, dialect: Arc<dyn PromptDialect>) {
        self.dialects.insert(dialect.name().to_string(), dialect);
    }

    pub fn get(&self, name: &str) -> Result<Arc<dyn PromptDialect>, EvalError> {
        self.dialects
            .get(name)
            .cloned()
            .ok_or_else(|| EvalError::UnknownDialect(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.dialects.keys().map(String::as_str)
    }
}
