//! The HTTP transport against a throwaway local server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use debate_distill::client::{
    ChatRequest, ClientConfig, ClientError, HttpTransport, LlmClient, Message, Transport, TransportError,
};
use serde_json::Value;

#[derive(Debug, Clone)]
struct Seen {
    request_line: String,
    headers: Vec<(String, String)>,
    body: String,
}

impl Seen {
    fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// Serves one scripted `(status, body, delay)` per connection, then stops.
fn serve(replies: Vec<(u16, String, u64)>) -> (String, Arc<Mutex<Vec<Seen>>>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let base = format!("http://{}/v1", listener.local_addr().unwrap());
    let seen = Arc::new(Mutex::new(Vec::new()));
    let log = seen.clone();
    thread::spawn(move || {
        for (status, body, delay) in replies {
            let Ok((stream, _)) = listener.accept() else { return };
            let mut reader = BufReader::new(stream.try_clone().unwrap());
            let mut request_line = String::new();
            reader.read_line(&mut request_line).unwrap();
            let mut headers = Vec::new();
            loop {
                let mut line = String::new();
                reader.read_line(&mut line).unwrap();
                let line = line.trim_end();
                if line.is_empty() {
                    break;
                }
                let (k, v) = line.split_once(':').unwrap();
                headers.push((k.trim().to_string(), v.trim().to_string()));
            }
            let len: usize = headers
                .iter()
                .find(|(k, _)| k.eq_ignore_ascii_case("content-length"))
                .map(|(_, v)| v.parse().unwrap())
                .unwrap_or(0);
            let mut buf = vec![0; len];
            reader.read_exact(&mut buf).unwrap();
            log.lock().unwrap().push(Seen {
                request_line: request_line.trim_end().to_string(),
                headers,
                body: String::from_utf8(buf).unwrap(),
            });
            thread::sleep(Duration::from_millis(delay));
            let mut stream = stream;
            let _ = write!(
                stream,
                "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                body.len()
            );
        }
    });
    (base, seen)
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "choices": [{"message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
        "usage": {"prompt_tokens": 11, "completion_tokens": 3}
    })
    .to_string()
}

fn request() -> ChatRequest {
    ChatRequest {
        model: "gpt-4o-mini".into(),
        messages: vec![Message::system("be brief"), Message::user("2+2?")],
        temperature: 0.0,
        max_tokens: 16,
        seed: None,
    }
}

fn client(base: &str, retries: u32) -> LlmClient {
    let transport = HttpTransport::new(base, Some("sk-test".into()), Duration::from_secs(5));
    let cfg = ClientConfig { base_url: base.into(), max_retries: retries, ..ClientConfig::default() };
    LlmClient::with_sleeper(Arc::new(transport), cfg, Arc::new(|_| {}))
}

#[test]
fn sends_openai_shaped_request() {
    let (base, seen) = serve(vec![(200, ok_body("Final Answer: 4"), 0)]);
    let resp = client(&base, 0).complete(&request()).unwrap();
    assert_eq!(resp.content, "Final Answer: 4");
    assert_eq!(resp.usage.prompt_tokens, 11);
    assert_eq!(resp.usage.completion_tokens, 3);

    let seen = seen.lock().unwrap();
    assert_eq!(seen.len(), 1);
    assert_eq!(seen[0].request_line, "POST /v1/chat/completions HTTP/1.1");
    assert_eq!(seen[0].header("authorization"), Some("Bearer sk-test"));
    assert!(seen[0].header("content-type").unwrap().starts_with("application/json"));
    let body: Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(body["model"], "gpt-4o-mini");
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["content"], "2+2?");
    assert_eq!(body["max_tokens"], 16);
    assert!(body.get("seed").is_none());
}

#[test]
fn retries_service_unavailable() {
    let (base, seen) = serve(vec![(503, "{}".into(), 0), (429, "{}".into(), 0), (200, ok_body("done"), 0)]);
    let resp = client(&base, 3).complete(&request()).unwrap();
    assert_eq!(resp.content, "done");
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn gives_up_after_budget() {
    let (base, seen) = serve(vec![(500, "{}".into(), 0); 3]);
    match client(&base, 2).complete(&request()) {
        Err(ClientError::Exhausted { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("expected exhaustion, got {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 3);
}

#[test]
fn unauthorized_is_not_retried() {
    let (base, seen) = serve(vec![(401, r#"{"error":"bad key"}"#.into(), 0), (200, ok_body("late"), 0)]);
    match client(&base, 3).complete(&request()) {
        Err(ClientError::Auth { status }) => assert_eq!(status, 401),
        other => panic!("expected auth error, got {other:?}"),
    }
    assert_eq!(seen.lock().unwrap().len(), 1);
}

#[test]
fn bad_request_body_is_kept() {
    let (base, _) = serve(vec![(400, r#"{"error":"no"}"#.into(), 0)]);
    let t = HttpTransport::new(&base, None, Duration::from_secs(5));
    match t.send(&request()) {
        Err(TransportError::Http { status, body }) => {
            assert_eq!(status, 400);
            assert!(body.contains("no"));
        }
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn slow_server_times_out() {
    let (base, _) = serve(vec![(200, ok_body("slow"), 1500)]);
    let t = HttpTransport::new(&base, None, Duration::from_millis(200));
    assert!(matches!(t.send(&request()), Err(TransportError::Timeout)));
}

#[test]
fn refused_connection_is_retryable_transport_error() {
    let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let t = HttpTransport::new(&format!("http://127.0.0.1:{port}"), None, Duration::from_secs(2));
    let err = t.send(&request()).unwrap_err();
    assert!(matches!(err, TransportError::Connection(_)), "{err:?}");
    assert!(err.is_retryable());
}

#[test]
fn garbage_body_is_a_decode_error() {
    let (base, _) = serve(vec![(200, "not json".into(), 0)]);
    let t = HttpTransport::new(&base, None, Duration::from_secs(5));
    assert!(matches!(t.send(&request()), Err(TransportError::Decode(_))));
}
