use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, ClientConfig, ClientError, FinishReason, Transport, TransportError, Usage};

/// Blocking HTTP transport for `POST {base_url}/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
    url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    /// Reads the API key from `config.api_key_env`. A missing key is an error
    /// unless `require_key` is false (local servers often need none).
    pub fn from_config(config: &ClientConfig, require_key: bool) -> Result<Self, ClientError> {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        if require_key && api_key.is_none() {
            return Err(ClientError::MissingApiKey(config.api_key_env.clone()));
        }
        Ok(Self::new(&config.base_url, api_key, Duration::from_millis(config.request_timeout_ms)))
    }

    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent =
            ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(timeout)).build().into();
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        Self { agent, url, api_key }
    }
}

impl Transport for HttpTransport {
    fn send(&self, request: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let started = Instant::now();
        let mut req = self.agent.post(&self.url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let body = encode_request(request).to_string();
        let mut resp = req.send(body).map_err(map_ureq_error)?;
        let status = resp.status().as_u16();
        let text = resp.body_mut().read_to_string().map_err(map_ureq_error)?;
        if !(200..300).contains(&status) {
            return Err(TransportError::Http { status, body: text });
        }
        decode_response(&text, started.elapsed().as_millis() as u64)
    }
}

fn map_ureq_error(e: ureq::Error) -> TransportError {
    match e {
        ureq::Error::StatusCode(status) => TransportError::Http { status, body: String::new() },
        ureq::Error::Timeout(_) => TransportError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => TransportError::Timeout,
        ureq::Error::Io(io) => TransportError::Connection(io.to_string()),
        ureq::Error::HostNotFound | ureq::Error::ConnectionFailed => TransportError::Connection(e.to_string()),
        other => TransportError::Connection(other.to_string()),
    }
}

/// Wire body for a chat-completions call.
pub fn encode_request(request: &ChatRequest) -> Value {
    let mut body = json!({
        "model": request.model,
        "messages": request.messages,
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    });
    if let Some(seed) = request.seed {
        body["seed"] = json!(seed);
    }
    body
}

/// Parses a chat-completions response body, taking the first choice.
pub fn decode_response(body: &str, latency_ms: u64) -> Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(body).map_err(|e| TransportError::Decode(e.to_string()))?;
    let choice = v
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| TransportError::Decode("response has no choices".into()))?;
    let content = choice
        .get("message")
        .and_then(|m| m.get("content"))
        .and_then(Value::as_str)
        .ok_or_else(|| TransportError::Decode("choice has no message content".into()))?
        .to_string();
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("stop") | None => FinishReason::Stop,
        Some("length") => FinishReason::Length,
        Some(_) => FinishReason::Error,
    };
    let count = |k: &str| v.get("usage").and_then(|u| u.get(k)).and_then(Value::as_u64).unwrap_or(0);
    Ok(ChatResponse {
        content,
        finish_reason,
        usage: Usage { prompt_tokens: count("prompt_tokens"), completion_tokens: count("completion_tokens") },
        latency_ms,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::client::Message;

    #[test]
    fn request_wire_shape() {
        let r = ChatRequest {
            model: "gpt".into(),
            messages: vec![Message::system("s"), Message::user("u")],
            temperature: 0.7,
            max_tokens: 64,
            seed: Some(3),
        };
        let v = encode_request(&r);
        assert_eq!(v["messages"][0]["role"], "system");
        assert_eq!(v["messages"][1]["content"], "u");
        assert_eq!(v["max_tokens"], 64);
        assert_eq!(v["seed"], 3);
        let r = ChatRequest { seed: None, ..r };
        assert!(encode_request(&r).get("seed").is_none());
    }

    #[test]
    fn decodes_first_choice() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Final Answer: 4"},"finish_reason":"length"}],
                       "usage":{"prompt_tokens":10,"completion_tokens":5}}"#;
        let r = decode_response(body, 12).unwrap();
        assert_eq!(r.content, "Final Answer: 4");
        assert_eq!(r.finish_reason, FinishReason::Length);
        assert_eq!(r.usage, Usage { prompt_tokens: 10, completion_tokens: 5 });
        assert_eq!(r.latency_ms, 12);
    }

    #[test]
    fn malformed_bodies_are_decode_errors() {
        for body in ["not json", "{}", r#"{"choices":[]}"#, r#"{"choices":[{"message":{}}]}"#] {
            assert!(matches!(decode_response(body, 0), Err(TransportError::Decode(_))), "{body}");
        }
    }

    #[test]
    fn missing_key_is_reported() {
        let cfg = ClientConfig { api_key_env: "DEBATE_DISTILL_SURELY_UNSET_KEY".into(), ..ClientConfig::default() };
        assert!(matches!(HttpTransport::from_config(&cfg, true), Err(ClientError::MissingApiKey(_))));
        assert!(HttpTransport::from_config(&cfg, false).is_ok());
    }
}
