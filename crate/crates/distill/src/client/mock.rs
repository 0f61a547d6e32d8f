use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ChatRequest, ChatResponse, FinishReason, Transport, TransportError, Usage};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MockFailure {
    Timeout,
    Connection,
}

/// One scripted outcome. Precedence: `error`, then a non-2xx `status`, then
/// `echo`, then `content`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockReply {
    pub content: Option<String>,
    /// Reply with the last message of the request.
    pub echo: bool,
    pub finish_reason: Option<FinishReason>,
    pub status: Option<u16>,
    pub error: Option<MockFailure>,
    pub delay_ms: u64,
}

impl MockReply {
    pub fn content(text: impl Into<String>) -> Self {
        Self { content: Some(text.into()), ..Self::default() }
    }

    pub fn status(code: u16) -> Self {
        Self { status: Some(code), ..Self::default() }
    }

    pub fn timeout() -> Self {
        Self { error: Some(MockFailure::Timeout), ..Self::default() }
    }

    pub fn connection_error() -> Self {
        Self { error: Some(MockFailure::Connection), ..Self::default() }
    }

    pub fn echo() -> Self {
        Self { echo: true, ..Self::default() }
    }

    pub fn with_delay(mut self, ms: u64) -> Self {
        self.delay_ms = ms;
        self
    }
}

/// Matches when the model (if given) is equal and every `contains` needle
/// occurs somewhere in the request text. Replies are served in order and
/// the last one repeats.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockRule {
    pub model: Option<String>,
    pub contains: Vec<String>,
    pub replies: Vec<MockReply>,
}

impl MockRule {
    pub fn new(contains: &[&str], replies: Vec<MockReply>) -> Self {
        Self { model: None, contains: contains.iter().map(|s| s.to_string()).collect(), replies }
    }

    fn matches(&self, request: &ChatRequest, text: &str) -> bool {
        self.model.as_ref().is_none_or(|m| *m == request.model)
            && self.contains.iter().all(|n| text.contains(n.as_str()))
    }
}

/// A scripted conversation. Requests draw from `sequence` first, then from
/// the first matching rule, then `fallback`; with none of those the mock
/// answers HTTP 404.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MockScript {
    pub sequence: Vec<MockReply>,
    pub rules: Vec<MockRule>,
    pub fallback: Option<MockReply>,
}

impl MockScript {
    pub fn sequence(replies: Vec<MockReply>) -> Self {
        Self { sequence: replies, ..Self::default() }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CallRecord {
    pub model: String,
    pub text: String,
    /// Offsets from the mock's creation.
    pub started: Duration,
    pub finished: Duration,
}

/// In-process [`Transport`] replaying a [`MockScript`], with call logging
/// and in-flight instrumentation.
pub struct MockTransport {
    script: MockScript,
    state: Mutex<Cursor>,
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: Mutex<Vec<CallRecord>>,
    epoch: Instant,
}

#[derive(Default)]
struct Cursor {
    sequence: usize,
    rules: Vec<usize>,
}

impl MockTransport {
    pub fn new(script: MockScript) -> Self {
        let rules = vec![0; script.rules.len()];
        Self {
            script,
            state: Mutex::new(Cursor { sequence: 0, rules }),
            in_flight: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
            calls: Mutex::new(Vec::new()),
            epoch: Instant::now(),
        }
    }

    pub fn calls(&self) -> Vec<CallRecord> {
        self.calls.lock().expect("call log poisoned").clone()
    }

    pub fn peak_in_flight(&self) -> usize {
        self.peak.load(Ordering::SeqCst)
    }

    fn pick(&self, request: &ChatRequest, text: &str) -> Option<MockReply> {
        let mut cur = self.state.lock().expect("mock state poisoned");
        if cur.sequence < self.script.sequence.len() {
            cur.sequence += 1;
            return Some(self.script.sequence[cur.sequence - 1].clone());
        }
        for (i, rule) in self.script.rules.iter().enumerate() {
            if rule.replies.is_empty() || !rule.matches(request, text) {
                continue;
            }
            let k = cur.rules[i].min(rule.replies.len() - 1);
            cur.rules[i] += 1;
            return Some(rule.replies[k].clone());
        }
        self.script.fallback.clone()
    }
}

impl Transport for MockTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.peak.fetch_max(now, Ordering::SeqCst);
        let started = self.epoch.elapsed();
        let text = request.text();
        let reply = self.pick(request, &text);
        if let Some(r) = &reply {
            if r.delay_ms > 0 {
                thread::sleep(Duration::from_millis(r.delay_ms));
            }
        }
        let out = match reply {
            None => Err(TransportError::Http { status: 404, body: "no scripted reply".into() }),
            Some(r) => respond(r, request),
        };
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        self.calls.lock().expect("call log poisoned").push(CallRecord {
            model: request.model.clone(),
            text,
            started,
            finished: self.epoch.elapsed(),
        });
        out
    }
}

fn respond(r: MockReply, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
    match r.error {
        Some(MockFailure::Timeout) => return Err(TransportError::Timeout),
        Some(MockFailure::Connection) => return Err(TransportError::Connection("scripted failure".into())),
        None => {}
    }
    if let Some(status) = r.status.filter(|s| !(200..300).contains(s)) {
        return Err(TransportError::Http { status, body: String::new() });
    }
    let content = if r.echo {
        request.messages.last().map(|m| m.content.clone()).unwrap_or_default()
    } else {
        r.content.unwrap_or_default()
    };
    Ok(ChatResponse {
        content,
        finish_reason: r.finish_reason.unwrap_or(FinishReason::Stop),
        usage: Usage::default(),
        latency_ms: r.delay_ms,
    })
}
