use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{prompt_hash, ChatMessage, ChatRequest, FinishReason, Gateway};
use crate::promptgen::{CurriculumPart, GenerationJob};

/// Applies `f` to every item with at most `parallelism` calls running at
/// once. Results come back in input order.
pub fn map_bounded<T, R, F>(items: &[T], parallelism: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let workers = parallelism.max(1).min(items.len().max(1));
    if workers == 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<Option<R>>> = Mutex::new((0..items.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(i, &items[i]);
                slots.lock().expect("result slots")[i] = Some(r);
            });
        }
    });
    slots
        .into_inner()
        .expect("result slots")
        .into_iter()
        .map(|r| r.expect("every slot filled"))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub max_new_tokens: u32,
    pub temperature: f64,
}

impl Default for GenerationParams {
    fn default() -> Self {
        Self {
            max_new_tokens: 4096,
            temperature: 0.0,
        }
    }
}

/// Outcome of one generation job. Exactly one of `text` and `error` is set;
/// a reply with `finish_reason = error` is recorded as an error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaTranscript {
    pub image_id: String,
    pub template_id: String,
    pub curriculum_part: CurriculumPart,
    pub backend_id: String,
    pub prompt_sha256: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finish_reason: Option<FinishReason>,
    #[serde(default)]
    pub cached: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl QaTranscript {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }
}

pub fn run_jobs(
    jobs: &[GenerationJob],
    gateway: &Gateway,
    params: GenerationParams,
    parallelism: usize,
) -> Vec<QaTranscript> {
    map_bounded(jobs, parallelism, |_, job| {
        let request = ChatRequest {
            system_prompt: None,
            messages: vec![ChatMessage::user(job.instantiated_prompt.clone())],
            max_new_tokens: params.max_new_tokens,
            temperature: params.temperature,
        };
        let mut t = QaTranscript {
            image_id: job.image_id.clone(),
            template_id: job.template_id.clone(),
            curriculum_part: job.curriculum_part,
            backend_id: gateway.backend_id().to_string(),
            prompt_sha256: prompt_hash(&job.instantiated_prompt),
            text: None,
            finish_reason: None,
            cached: false,
            error: None,
        };
        match gateway.complete(&request) {
            Ok(resp) if resp.finish_reason == FinishReason::Error => {
                t.finish_reason = Some(resp.finish_reason);
                t.error = Some(
                    resp.error
                        .unwrap_or_else(|| "backend reported an error".into()),
                );
            }
            Ok(resp) => {
                t.text = Some(resp.text);
                t.finish_reason = Some(resp.finish_reason);
                t.cached = resp.cached;
            }
            Err(e) => t.error = Some(e.to_string()),
        }
        t
    })
}
