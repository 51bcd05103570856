use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use super::{
    AttemptLog, Backend, BackendError, ChatRequest, ChatResponse, FinishReason, ResponseCache,
    RetryPolicy, Sleeper, ThreadSleeper,
};
use crate::rng::{seeded, SeededRng};

/// Enforces a minimum spacing between request starts across all workers.
#[derive(Debug)]
pub struct RateLimiter {
    min_interval: Duration,
    next_slot: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        Self {
            min_interval,
            next_slot: Mutex::new(None),
        }
    }

    /// Reserves the next slot and returns how long the caller must wait.
    pub fn reserve(&self, now: Instant) -> Duration {
        let mut slot = self.next_slot.lock().expect("limiter lock");
        let start = match *slot {
            Some(t) if t > now => t,
            _ => now,
        };
        *slot = Some(start + self.min_interval);
        start - now
    }
}

pub struct Gateway {
    backend: Arc<dyn Backend>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    limiter: Option<RateLimiter>,
    jitter_rng: Mutex<SeededRng>,
}

pub struct GatewayBuilder {
    backend: Arc<dyn Backend>,
    cache: Option<Arc<ResponseCache>>,
    retry: RetryPolicy,
    sleeper: Arc<dyn Sleeper>,
    min_interval: Option<Duration>,
    jitter_seed: u64,
}

impl GatewayBuilder {
    pub fn cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn retry(mut self, policy: RetryPolicy) -> Self {
        self.retry = policy;
        self
    }

    pub fn sleeper(mut self, sleeper: Arc<dyn Sleeper>) -> Self {
        self.sleeper = sleeper;
        self
    }

    pub fn min_interval(mut self, d: Duration) -> Self {
        self.min_interval = (!d.is_zero()).then_some(d);
        self
    }

    pub fn jitter_seed(mut self, seed: u64) -> Self {
        self.jitter_seed = seed;
        self
    }

    pub fn build(self) -> Gateway {
        Gateway {
            backend: self.backend,
            cache: self.cache,
            retry: self.retry,
            sleeper: self.sleeper,
            limiter: self.min_interval.map(RateLimiter::new),
            jitter_rng: Mutex::new(seeded(self.jitter_seed)),
        }
    }
}

impl Gateway {
    pub fn builder(backend: Arc<dyn Backend>) -> GatewayBuilder {
        GatewayBuilder {
            backend,
            cache: None,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            min_interval: None,
            jitter_seed: 0,
        }
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, BackendError> {
        request.validate()?;
        let backend_id = self.backend.id().to_string();
        if let Some(hit) = self
            .cache
            .as_ref()
            .and_then(|c| c.get(&backend_id, request))
        {
            return Ok(ChatResponse {
                text: hit.text,
                finish_reason: hit.finish_reason,
                backend_id,
                latency_ms: 0,
                cached: true,
                error: hit.error,
            });
        }

        let max_attempts = self.retry.max_attempts.max(1);
        let mut attempts = Vec::new();
        let mut prev_delay = Duration::ZERO;
        for attempt in 1..=max_attempts {
            if let Some(l) = &self.limiter {
                let wait = l.reserve(Instant::now());
                if !wait.is_zero() {
                    self.sleeper.sleep(wait);
                }
            }
            let started = Instant::now();
            match self.backend.send(request) {
                Ok(reply) => {
                    let latency_ms = started.elapsed().as_millis() as u64;
                    if reply.finish_reason != FinishReason::Error {
                        if let Some(c) = &self.cache {
                            if let Err(e) = c.put(&backend_id, request, &reply) {
                                log::warn!("cache write failed: {e}");
                            }
                        }
                    }
                    return Ok(ChatResponse {
                        text: reply.text,
                        finish_reason: reply.finish_reason,
                        backend_id,
                        latency_ms,
                        cached: false,
                        error: reply.error,
                    });
                }
                Err(err) if err.is_retryable() => {
                    let delay = (attempt < max_attempts).then(|| {
                        let mut rng = self.jitter_rng.lock().expect("jitter lock");
                        self.retry.jittered_delay(attempt, prev_delay, &mut *rng)
                    });
                    attempts.push(AttemptLog {
                        attempt,
                        error: err.to_string(),
                        delay_ms: delay.map(|d| d.as_millis() as u64),
                    });
                    if let Some(d) = delay {
                        log::debug!(
                            "{backend_id}: attempt {attempt} failed ({err}); retrying in {d:?}"
                        );
                        self.sleeper.sleep(d);
                        prev_delay = d;
                    }
                }
                Err(err) => return Err(err),
            }
        }
        Err(BackendError::Exhausted { attempts })
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicU32, Ordering};

    use super::*;
    use crate::llm_gateway::{BackendReply, MockScript, ScriptedMock};

    #[derive(Default)]
    struct RecordingSleeper(Mutex<Vec<Duration>>);

    impl Sleeper for RecordingSleeper {
        fn sleep(&self, d: Duration) {
            self.0.lock().unwrap().push(d);
        }
    }

    /// Fails with the given status `failures` times, then succeeds.
    struct Flaky {
        failures: u32,
        status: u16,
        calls: AtomicU32,
    }

    impl Backend for Flaky {
        fn id(&self) -> &str {
            "flaky"
        }

        fn send(&self, _: &ChatRequest) -> Result<BackendReply, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.failures {
                Err(BackendError::Http {
                    status: self.status,
                    body: "busy".into(),
                })
            } else {
                Ok(BackendReply::stop("ok"))
            }
        }
    }

    fn flaky(failures: u32, status: u16) -> Arc<Flaky> {
        Arc::new(Flaky {
            failures,
            status,
            calls: AtomicU32::new(0),
        })
    }

    #[test]
    fn second_identical_request_is_cached() {
        let mock = Arc::new(ScriptedMock::new(
            "m",
            MockScript::default().with_entry("p", "scripted text"),
        ));
        let gw = Gateway::builder(mock.clone())
            .cache(Arc::new(ResponseCache::in_memory()))
            .build();
        let req = ChatRequest::single("p", 10);
        let first = gw.complete(&req).unwrap();
        let second = gw.complete(&req).unwrap();
        assert!(!first.cached);
        assert!(second.cached);
        assert_eq!(first.text.as_bytes(), second.text.as_bytes());
        assert_eq!(mock.calls(), 1);
    }

    #[test]
    fn error_replies_are_not_cached() {
        let mock = Arc::new(ScriptedMock::new("m", MockScript::default()));
        let gw = Gateway::builder(mock.clone())
            .cache(Arc::new(ResponseCache::in_memory()))
            .build();
        let req = ChatRequest::single("p", 10);
        assert_eq!(
            gw.complete(&req).unwrap().finish_reason,
            FinishReason::Error
        );
        assert!(!gw.complete(&req).unwrap().cached);
        assert_eq!(mock.calls(), 2);
    }

    #[test]
    fn retries_429_then_succeeds() {
        let sleeper = Arc::new(RecordingSleeper::default());
        let backend = flaky(2, 429);
        let gw = Gateway::builder(backend.clone())
            .sleeper(sleeper.clone())
            .build();
        let resp = gw.complete(&ChatRequest::single("p", 10)).unwrap();
        assert_eq!(resp.text, "ok");
        assert_eq!(backend.calls.load(Ordering::SeqCst), 3);
        let delays = sleeper.0.lock().unwrap().clone();
        assert_eq!(delays.len(), 2);
        assert!(
            delays[0] >= Duration::from_millis(800) && delays[0] <= Duration::from_millis(1200)
        );
        assert!(delays[1] >= delays[0]);
    }

    #[test]
    fn exhaustion_carries_attempt_log_and_respects_maximum() {
        let sleeper = Arc::new(RecordingSleeper::default());
        let backend = flaky(100, 503);
        let gw = Gateway::builder(backend.clone())
            .sleeper(sleeper.clone())
            .build();
        match gw.complete(&ChatRequest::single("p", 10)) {
            Err(BackendError::Exhausted { attempts }) => {
                assert_eq!(attempts.len(), 5);
                assert!(attempts.last().unwrap().delay_ms.is_none());
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(backend.calls.load(Ordering::SeqCst), 5);
        let delays = sleeper.0.lock().unwrap().clone();
        assert_eq!(delays.len(), 4);
        assert!(delays.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn client_errors_fail_fast() {
        let backend = flaky(100, 400);
        let gw = Gateway::builder(backend.clone())
            .sleeper(Arc::new(RecordingSleeper::default()))
            .build();
        assert!(matches!(
            gw.complete(&ChatRequest::single("p", 10)),
            Err(BackendError::Http { status: 400, .. })
        ));
        assert_eq!(backend.calls.load(Ordering::SeqCst), 1);
    }

    #[test]
    fn limiter_spaces_reservations() {
        let l = RateLimiter::new(Duration::from_millis(100));
        let t0 = Instant::now();
        assert_eq!(l.reserve(t0), Duration::ZERO);
        assert_eq!(l.reserve(t0), Duration::from_millis(100));
        assert_eq!(l.reserve(t0), Duration::from_millis(200));
        assert_eq!(l.reserve(t0 + Duration::from_secs(5)), Duration::ZERO);
    }

    #[test]
    fn invalid_request_rejected_before_backend() {
        let mock = Arc::new(ScriptedMock::new("m", MockScript::default()));
        let gw = Gateway::builder(mock.clone()).build();
        let mut req = ChatRequest::single("p", 10);
        req.messages.clear();
        assert!(matches!(
            gw.complete(&req),
            Err(BackendError::InvalidRequest(_))
        ));
        assert_eq!(mock.calls(), 0);
    }
}
