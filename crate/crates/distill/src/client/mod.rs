//! Blocking, concurrency-capped client for an OpenAI-compatible
//! chat-completions endpoint.
//!
//! [`LlmClient`] owns the retry policy and admission control; the wire is
//! behind [`Transport`], implemented by [`HttpTransport`] for real servers
//! and [`MockTransport`] for scripted offline runs.

mod http;
mod mock;

pub use http::{decode_response, encode_request, HttpTransport};
pub use mock::{CallRecord, MockReply, MockRule, MockScript, MockTransport};

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), ClientError> {
        let first =
            self.messages.first().ok_or_else(|| ClientError::InvalidRequest("messages must not be empty".into()))?;
        if first.role == Role::Assistant {
            return Err(ClientError::InvalidRequest("first message must be system or user".into()));
        }
        if !(self.temperature >= 0.0) {
            return Err(ClientError::InvalidRequest("temperature must be >= 0".into()));
        }
        if self.max_tokens == 0 {
            return Err(ClientError::InvalidRequest("max_tokens must be positive".into()));
        }
        Ok(())
    }

    /// All message contents joined by newlines; what mock rules match on.
    pub fn text(&self) -> String {
        self.messages.iter().map(|m| m.content.as_str()).collect::<Vec<_>>().join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Error,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub finish_reason: FinishReason,
    pub usage: Usage,
    pub latency_ms: u64,
}

/// What went wrong on a single attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connection(String),
    #[error("malformed response: {0}")]
    Decode(String),
}

impl TransportError {
    pub fn is_retryable(&self) -> bool {
        match self {
            TransportError::Http { status, .. } => *status == 429 || (500..600).contains(status),
            TransportError::Timeout | TransportError::Connection(_) => true,
            TransportError::Decode(_) => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("all {attempts} attempts failed; last error: {last}")]
    Exhausted { attempts: u32, last: TransportError },
    #[error("authentication rejected (HTTP {status})")]
    Auth { status: u16 },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("request rejected: {0}")]
    Rejected(TransportError),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("API key environment variable {0} is not set")]
    MissingApiKey(String),
}

/// Sends one request over the wire.
pub trait Transport: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClientConfig {
    pub base_url: String,
    /// Name of the environment variable holding the API key.
    pub api_key_env: String,
    pub max_in_flight: usize,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub request_timeout_ms: u64,
    /// Seeds the backoff jitter.
    pub jitter_seed: u64,
}

impl Default for ClientConfig {
    fn default() -> Self {
        Self {
            base_url: "http://localhost:8000/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            max_in_flight: 8,
            max_retries: 3,
            backoff_base_ms: 500,
            request_timeout_ms: 120_000,
            jitter_seed: 0,
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.max_in_flight == 0 {
            return Err("client.max_in_flight must be >= 1".into());
        }
        if self.backoff_base_ms == 0 {
            return Err("client.backoff_base_ms must be >= 1".into());
        }
        if self.request_timeout_ms == 0 {
            return Err("client.request_timeout_ms must be >= 1".into());
        }
        Ok(())
    }
}

/// Counting semaphore bounding outstanding transport calls.
struct Gate {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self { free: Mutex::new(n), cv: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cv.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cv.notify_one();
    }
}

type Sleeper = Arc<dyn Fn(Duration) + Send + Sync>;

/// Shareable client handle. Clones share the admission gate, so the
/// `max_in_flight` cap is global across all of them.
#[derive(Clone)]
pub struct LlmClient {
    inner: Arc<Inner>,
}

struct Inner {
    transport: Arc<dyn Transport>,
    config: ClientConfig,
    gate: Gate,
    jitter: Mutex<ChaCha8Rng>,
    sleep: Sleeper,
}

impl fmt::Debug for LlmClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LlmClient").field("config", &self.inner.config).finish_non_exhaustive()
    }
}

impl LlmClient {
    pub fn new(transport: Arc<dyn Transport>, config: ClientConfig) -> Self {
        Self::with_sleeper(transport, config, Arc::new(thread::sleep))
    }

    /// Like [`LlmClient::new`] but with a custom backoff sleep, e.g. a no-op
    /// for in-process mocks.
    pub fn with_sleeper(transport: Arc<dyn Transport>, config: ClientConfig, sleep: Sleeper) -> Self {
        let max = config.max_in_flight.max(1);
        Self {
            inner: Arc::new(Inner {
                transport,
                gate: Gate::new(max),
                jitter: Mutex::new(ChaCha8Rng::seed_from_u64(config.jitter_seed)),
                config,
                sleep,
            }),
        }
    }

    pub fn config(&self) -> &ClientConfig {
        &self.inner.config
    }

    /// Upper bound of the backoff before retry `k` (0-based): `base · 2^k` ms.
    pub fn backoff_cap_ms(&self, retry: u32) -> u64 {
        self.inner.config.backoff_base_ms.saturating_mul(1u64 << retry.min(32))
    }

    fn backoff(&self, retry: u32) -> Duration {
        let cap = self.backoff_cap_ms(retry);
        let ms = self.inner.jitter.lock().expect("jitter poisoned").random_range(0..=cap);
        Duration::from_millis(ms)
    }

    /// One request with retries on transport errors, 429 and 5xx, sleeping a
    /// uniformly jittered `[0, base·2^k]` ms before retry `k`.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ClientError> {
        request.validate()?;
        let max_attempts = self.inner.config.max_retries + 1;
        let mut attempt = 0;
        loop {
            attempt += 1;
            let result = {
                let _permit = self.inner.gate.acquire();
                self.inner.transport.send(request)
            };
            let err = match result {
                Ok(resp) => return Ok(resp),
                Err(e) => e,
            };
            if let TransportError::Http { status: status @ (401 | 403), .. } = err {
                return Err(ClientError::Auth { status });
            }
            if !err.is_retryable() {
                return Err(ClientError::Rejected(err));
            }
            if attempt >= max_attempts {
                return Err(match err {
                    TransportError::Timeout => ClientError::Timeout { attempts: attempt },
                    last => ClientError::Exhausted { attempts: attempt, last },
                });
            }
            log::debug!("attempt {attempt} failed ({err}), retrying");
            (self.inner.sleep)(self.backoff(attempt - 1));
        }
    }

    /// Runs every request, at most `max_in_flight` at a time. Results are
    /// positionally aligned with `requests`; failures stay per-item.
    pub fn complete_batch(&self, requests: &[ChatRequest]) -> Vec<Result<ChatResponse, ClientError>> {
        let n = requests.len();
        if n == 0 {
            return Vec::new();
        }
        let workers = self.inner.config.max_in_flight.clamp(1, n);
        let next = AtomicUsize::new(0);
        let slots: Vec<Mutex<Option<Result<ChatResponse, ClientError>>>> = (0..n).map(|_| Mutex::new(None)).collect();
        thread::scope(|s| {
            for _ in 0..workers {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n {
                        break;
                    }
                    let r = self.complete(&requests[i]);
                    *slots[i].lock().expect("slot poisoned") = Some(r);
                });
            }
        });
        slots.into_iter().map(|m| m.into_inner().expect("slot poisoned").expect("every slot filled")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn request(text: &str) -> ChatRequest {
        ChatRequest {
            model: "m".into(),
            messages: vec![Message::user(text)],
            temperature: 0.0,
            max_tokens: 16,
            seed: None,
        }
    }

    fn client(script: MockScript, max_in_flight: usize, max_retries: u32) -> (LlmClient, Arc<MockTransport>) {
        let mock = Arc::new(MockTransport::new(script));
        let cfg = ClientConfig { max_in_flight, max_retries, backoff_base_ms: 1, ..ClientConfig::default() };
        (LlmClient::with_sleeper(mock.clone(), cfg, Arc::new(|_| {})), mock)
    }

    #[test]
    fn passthrough() {
        let (c, _) = client(MockScript::sequence(vec![MockReply::content("27")]), 1, 0);
        let r = c.complete(&request("q")).unwrap();
        assert_eq!(r.content, "27");
        assert_eq!(r.finish_reason, FinishReason::Stop);
    }

    #[test]
    fn retries_429_then_succeeds() {
        let script =
            MockScript::sequence(vec![MockReply::status(429), MockReply::status(429), MockReply::content("ok")]);
        let (c, mock) = client(script, 1, 2);
        assert_eq!(c.complete(&request("q")).unwrap().content, "ok");
        assert_eq!(mock.calls().len(), 3);
    }

    #[test]
    fn server_errors_exhaust_the_budget() {
        let (c, mock) = client(MockScript::sequence(vec![MockReply::status(500); 4]), 1, 3);
        match c.complete(&request("q")) {
            Err(ClientError::Exhausted { attempts: 4, last: TransportError::Http { status: 500, .. } }) => {}
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(mock.calls().len(), 4);
    }

    #[test]
    fn auth_errors_are_not_retried() {
        let (c, mock) = client(MockScript::sequence(vec![MockReply::status(401), MockReply::content("x")]), 1, 5);
        assert_eq!(c.complete(&request("q")), Err(ClientError::Auth { status: 401 }));
        assert_eq!(mock.calls().len(), 1);
    }

    #[test]
    fn other_client_errors_are_rejected_immediately() {
        let (c, mock) = client(MockScript::sequence(vec![MockReply::status(400), MockReply::content("x")]), 1, 5);
        assert!(matches!(c.complete(&request("q")), Err(ClientError::Rejected(_))));
        assert_eq!(mock.calls().len(), 1);
    }

    #[test]
    fn repeated_timeouts_surface_as_timeout() {
        let (c, _) = client(MockScript::sequence(vec![MockReply::timeout(); 3]), 1, 2);
        assert_eq!(c.complete(&request("q")), Err(ClientError::Timeout { attempts: 3 }));
    }

    #[test]
    fn invalid_requests_never_reach_the_wire() {
        let (c, mock) = client(MockScript::default(), 1, 0);
        let mut r = request("q");
        r.messages = vec![Message::assistant("hi")];
        assert!(matches!(c.complete(&r), Err(ClientError::InvalidRequest(_))));
        r.messages.clear();
        assert!(matches!(c.complete(&r), Err(ClientError::InvalidRequest(_))));
        assert!(mock.calls().is_empty());
    }

    #[test]
    fn backoff_is_full_jitter_within_cap() {
        let (c, _) = client(MockScript::default(), 1, 0);
        for k in 0..6 {
            for _ in 0..50 {
                assert!(c.backoff(k).as_millis() as u64 <= c.backoff_cap_ms(k));
            }
        }
        assert_eq!(c.backoff_cap_ms(3), 8);
    }

    #[test]
    fn empty_batch() {
        let (c, _) = client(MockScript::default(), 3, 0);
        assert!(c.complete_batch(&[]).is_empty());
    }

    #[test]
    fn batch_keeps_positions_and_isolates_failures() {
        let mut script = MockScript::default();
        script.rules.push(MockRule::new(&["bad"], vec![MockReply::status(500)]));
        script.rules.push(MockRule::new(&["item"], vec![MockReply::echo()]));
        let (c, _) = client(script, 2, 1);
        let reqs: Vec<_> = ["item 0", "item 1", "bad item 2", "item 3", "item 4"].iter().map(|t| request(t)).collect();
        let out = c.complete_batch(&reqs);
        assert_eq!(out.len(), 5);
        for (i, r) in out.iter().enumerate() {
            if i == 2 {
                assert!(matches!(r, Err(ClientError::Exhausted { attempts: 2, .. })));
            } else {
                assert_eq!(r.as_ref().unwrap().content, format!("item {i}"));
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn batch_never_exceeds_the_cap(n in 0usize..24, cap in 1usize..6) {
            let script = MockScript { fallback: Some(MockReply::content("x").with_delay(2)), ..MockScript::default() };
            let (c, mock) = client(script, cap, 0);
            let reqs: Vec<_> = (0..n).map(|i| request(&format!("r{i}"))).collect();
            let out = c.complete_batch(&reqs);
            prop_assert_eq!(out.len(), n);
            prop_assert!(mock.peak_in_flight() <= cap);
        }

        #[test]
        fn attempts_never_exceed_retry_budget(fails in 0usize..8, retries in 0u32..5) {
            let mut replies = vec![MockReply::status(503); fails];
            replies.push(MockReply::content("done"));
            let (c, mock) = client(MockScript::sequence(replies), 1, retries);
            let r = c.complete(&request("q"));
            prop_assert!(mock.calls().len() <= retries as usize + 1);
            prop_assert_eq!(r.is_ok(), fails <= retries as usize);
        }
    }
}
