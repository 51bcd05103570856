use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::tasks::{BIOMARKER_CUE_PREFIX, REFERRAL_CUE, STAGING_CUE};
use super::{EvalCase, EvalError, Presence, ReferralUrgency};
use crate::llm_gateway::{ChatMessage, Role};

/// Body of `POST /v1/generate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub image_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_b64: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system_prompt: Option<String>,
    pub messages: Vec<ChatMessage>,
    pub max_new_tokens: u32,
}

impl GenerateRequest {
    pub fn validate(&self) -> Result<(), String> {
        if self.image_id.is_empty() {
            return Err("image_id must be non-empty".into());
        }
        match self.messages.last() {
            None => Err("messages must be non-empty".into()),
            Some(m) if m.role == Role::System => {
                Err("last message must be user or assistant".into())
            }
            _ if self.max_new_tokens == 0 => Err("max_new_tokens must be positive".into()),
            _ => Ok(()),
        }
    }

    /// The final assistant turn, present when the request asks for a
    /// continuation.
    pub fn continuation_prefix(&self) -> Option<&str> {
        self.messages
            .last()
            .filter(|m| m.role == Role::Assistant)
            .map(|m| m.content.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateResponse {
    pub text: String,
}

/// A model under test.
pub trait ModelEndpoint: Send + Sync {
    fn id(&self) -> &str;

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, EvalError>;
}

/// Keeps at most `n` whitespace-separated words; a stand-in for a token
/// budget in the in-process endpoints.
fn truncate_words(text: &str, n: u32) -> String {
    let mut count = 0u32;
    let mut end = text.len();
    let mut in_word = false;
    for (i, ch) in text.char_indices() {
        if ch.is_whitespace() {
            in_word = false;
        } else if !in_word {
            in_word = true;
            count += 1;
            if count > n {
                end = i;
                break;
            }
        }
    }
    text[..end].trim_end().to_string()
}

const ORACLE_REPORT: &str = "The OCT scan was reviewed layer by layer, from the vitreous interface down to the choroid, and the observations are summarised in this report.";

/// Answers every continuation with the case's ground-truth label embedded
/// in a sentence.
pub struct OracleEndpoint {
    id: String,
    cases: HashMap<String, EvalCase>,
}

impl OracleEndpoint {
    pub fn new(cases: &[EvalCase]) -> Self {
        Self {
            id: "mock:oracle".into(),
            cases: cases
                .iter()
                .map(|c| (c.image_id.clone(), c.clone()))
                .collect(),
        }
    }

    fn phase2(&self, case: &EvalCase, prefix: &str) -> Result<String, EvalError> {
        let missing = |what: &str| {
            EvalError::Endpoint(format!("oracle has no {what} label for {}", case.image_id))
        };
        let prefix = prefix.trim_end();
        if prefix.ends_with(STAGING_CUE) {
            let stage = case.ground_truth_stage.ok_or_else(|| missing("stage"))?;
            return Ok(format!(
                " {stage} AMD. This conclusion follows from the observations described above."
            ));
        }
        if prefix.ends_with(REFERRAL_CUE) {
            let text = match case
                .ground_truth_referral
                .ok_or_else(|| missing("referral"))?
            {
                ReferralUrgency::Urgent => {
                    " should be seen by a specialist within the next two weeks."
                }
                ReferralUrgency::Routine => " should be seen within 18 weeks (routine referral).",
                ReferralUrgency::NotSeen => " should not be seen by a specialist at this time.",
            };
            return Ok(text.to_string());
        }
        if let Some(pos) = prefix.rfind(BIOMARKER_CUE_PREFIX) {
            let tail = prefix[pos + BIOMARKER_CUE_PREFIX.len()..].trim();
            let name = tail
                .strip_suffix(" is")
                .or_else(|| tail.strip_suffix(" are"))
                .ok_or_else(|| {
                    EvalError::Endpoint(format!("cannot read biomarker from cue '{tail}'"))
                })?;
            let truth = case
                .biomarker_labels
                .get(name)
                .ok_or_else(|| missing(name))?;
            return Ok(match truth.status {
                Presence::Present => {
                    " present in the scan, in line with the observations above.".into()
                }
                Presence::Absent => {
                    " not present in the scan, in line with the observations above.".into()
                }
            });
        }
        Err(EvalError::Endpoint(
            "oracle does not recognise the continuation cue".into(),
        ))
    }
}

impl ModelEndpoint for OracleEndpoint {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, EvalError> {
        let case = self.cases.get(&request.image_id).ok_or_else(|| {
            EvalError::Endpoint(format!("oracle has no case {}", request.image_id))
        })?;
        let text = match request.continuation_prefix() {
            Some(prefix) => self.phase2(case, prefix)?,
            None => ORACLE_REPORT.to_string(),
        };
        Ok(GenerateResponse {
            text: truncate_words(&text, request.max_new_tokens),
        })
    }
}

const ADVERSARIAL_REPORT: &str = "The scan shows the retinal layers with varying thickness across the image. Some regions look irregular and would benefit from a closer look.";
const ADVERSARIAL_CONTINUATION: &str =
    " difficult to determine from this scan alone, so further review by a specialist is advised.";

/// Fluent output that never contains a label string.
pub struct AdversarialEndpoint {
    id: String,
}

impl Default for AdversarialEndpoint {
    fn default() -> Self {
        Self {
            id: "mock:adversarial".into(),
        }
    }
}

impl ModelEndpoint for AdversarialEndpoint {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, EvalError> {
        let text = if request.continuation_prefix().is_some() {
            ADVERSARIAL_CONTINUATION
        } else {
            ADVERSARIAL_REPORT
        };
        Ok(GenerateResponse {
            text: truncate_words(text, request.max_new_tokens),
        })
    }
}

/// Client for a remote endpoint speaking the `/v1/generate` protocol.
pub struct HttpEndpoint {
    id: String,
    url: String,
    client: reqwest::blocking::Client,
}

impl HttpEndpoint {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, EvalError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| EvalError::EndpointConfig(e.to_string()))?;
        let base = base_url.trim_end_matches('/');
        Ok(Self {
            id: base.to_string(),
            url: format!("{base}/v1/generate"),
            client,
        })
    }
}

impl ModelEndpoint for HttpEndpoint {
    fn id(&self) -> &str {
        &self.id
    }

    fn generate(&self, request: &GenerateRequest) -> Result<GenerateResponse, EvalError> {
        let resp = self
            .client
            .post(&self.url)
            .json(request)
            .send()
            .map_err(|e| EvalError::Endpoint(format!("transport: {e}")))?;
        let status = resp.status();
        let body = resp
            .text()
            .map_err(|e| EvalError::Endpoint(format!("transport: {e}")))?;
        if !status.is_success() {
            return Err(EvalError::Endpoint(format!(
                "HTTP {}: {body}",
                status.as_u16()
            )));
        }
        serde_json::from_str(&body)
            .map_err(|e| EvalError::Endpoint(format!("malformed response: {e}")))
    }
}

/// Context passed to endpoint factories.
pub struct EndpointContext<'a> {
    pub cases: &'a [EvalCase],
    pub timeout: Duration,
}

pub trait EndpointFactory: Send + Sync {
    fn scheme(&self) -> &str;

    /// `target` is the full endpoint string, e.g. `mock:oracle`.
    fn build(
        &self,
        target: &str,
        ctx: &EndpointContext<'_>,
    ) -> Result<Arc<dyn ModelEndpoint>, EvalError>;
}

struct MockFactory;

impl EndpointFactory for MockFactory {
    fn scheme(&self) -> &str {
        "mock"
    }

    fn build(
        &self,
        target: &str,
        ctx: &EndpointContext<'_>,
    ) -> Result<Arc<dyn ModelEndpoint>, EvalError> {
        match target.strip_prefix("mock:") {
            Some("oracle") => Ok(Arc::new(OracleEndpoint::new(ctx.cases))),
            Some("adversarial") => Ok(Arc::new(AdversarialEndpoint::default())),
            _ => Err(EvalError::EndpointConfig(format!(
                "unknown mock endpoint '{target}' (expected mock:oracle or mock:adversarial)"
            ))),
        }
    }
}

struct HttpFactory(&'static str);

impl EndpointFactory for HttpFactory {
    fn scheme(&self) -> &str {
        self.0
    }

    fn build(
        &self,
        target: &str,
        ctx: &EndpointContext<'_>,
    ) -> Result<Arc<dyn ModelEndpoint>, EvalError> {
        Ok(Arc::new(HttpEndpoint::new(target, ctx.timeout)?))
    }
}

/// Endpoint factories keyed by the scheme before the first `:`.
pub struct EndpointRegistry {
    factories: BTreeMap<String, Box<dyn EndpointFactory>>,
}

impl Default for EndpointRegistry {
    fn default() -> Self {
        let mut r = Self {
            factories: BTreeMap::new(),
        };
        r.register(Box::new(MockFactory));
        r.register(Box::new(HttpFactory("http")));
        r.register(Box::new(HttpFactory("https")));
        r
    }
}

impl EndpointRegistry {
    pub fn register(&mut self, factory: Box<dyn EndpointFactory>) {
        self.factories.insert(factory.scheme().to_string(), factory);
    }

    pub fn build(
        &self,
        target: &str,
        ctx: &EndpointContext<'_>,
    ) -> Result<Arc<dyn ModelEndpoint>, EvalError> {
        let scheme = target.split(':').next().unwrap_or_default();
        let factory = self.factories.get(scheme).ok_or_else(|| {
            EvalError::EndpointConfig(format!("no endpoint factory for '{target}'"))
        })?;
        factory.build(target, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval_harness::{
        extract_label, BiomarkerTruth, Cohort, EvalTask, ReferralTask, StagingTask,
    };
    use crate::guidelines::StageLabel;

    fn case() -> EvalCase {
        let mut biomarker_labels = BTreeMap::new();
        biomarker_labels.insert(
            "drusen".to_string(),
            BiomarkerTruth {
                status: Presence::Absent,
                grade: None,
            },
        );
        EvalCase {
            image_id: "a".into(),
            ground_truth_stage: Some(StageLabel::LateWetInactive),
            ground_truth_referral: Some(ReferralUrgency::NotSeen),
            biomarker_labels,
            cohort: Cohort::Referral,
        }
    }

    fn continuation(cue: &str) -> GenerateRequest {
        GenerateRequest {
            image_id: "a".into(),
            image_b64: None,
            system_prompt: None,
            messages: vec![
                ChatMessage::user("x"),
                ChatMessage::assistant(format!("report\n{cue}")),
            ],
            max_new_tokens: 300,
        }
    }

    #[test]
    fn oracle_embeds_truth() {
        let o = OracleEndpoint::new(&[case()]);
        let t = o.generate(&continuation(STAGING_CUE)).unwrap().text;
        assert_eq!(
            extract_label(&t, StagingTask::new().label_set())
                .label
                .as_deref(),
            Some("late wet (inactive)")
        );
        let t = o.generate(&continuation(REFERRAL_CUE)).unwrap().text;
        assert_eq!(
            extract_label(&t, ReferralTask::new().label_set())
                .label
                .as_deref(),
            Some("not be seen")
        );
        let t = o
            .generate(&continuation(
                "To conclude these findings, in the OCT image drusen are",
            ))
            .unwrap()
            .text;
        assert!(t.starts_with(" not present"));
    }

    #[test]
    fn adversarial_is_label_free() {
        let a = AdversarialEndpoint::default();
        for text in [ADVERSARIAL_REPORT, ADVERSARIAL_CONTINUATION] {
            assert!(extract_label(text, StagingTask::new().label_set())
                .label
                .is_none());
            assert!(extract_label(text, ReferralTask::new().label_set())
                .label
                .is_none());
            assert!(!text.to_lowercase().contains("present"));
        }
        assert_eq!(
            a.generate(&continuation(STAGING_CUE)).unwrap().text,
            ADVERSARIAL_CONTINUATION
        );
    }

    #[test]
    fn word_budget_truncates() {
        assert_eq!(truncate_words("a b  c d", 2), "a b");
        assert_eq!(truncate_words(" a b", 5), " a b");
        assert_eq!(truncate_words("one", 1), "one");
    }

    #[test]
    fn registry_dispatch() {
        let reg = EndpointRegistry::default();
        let ctx = EndpointContext {
            cases: &[],
            timeout: Duration::from_secs(1),
        };
        assert_eq!(reg.build("mock:oracle", &ctx).unwrap().id(), "mock:oracle");
        assert_eq!(
            reg.build("http://127.0.0.1:9/", &ctx).unwrap().id(),
            "http://127.0.0.1:9"
        );
        assert!(reg.build("mock:nope", &ctx).is_err());
        assert!(reg.build("grpc://x", &ctx).is_err());
    }

    #[test]
    fn request_validation() {
        let mut r = continuation(STAGING_CUE);
        assert!(r.validate().is_ok());
        r.max_new_tokens = 0;
        assert!(r.validate().is_err());
    }
}
