//! Live providers against a scripted local HTTP server.

use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use codechain_core::llm::{
    CompletionProvider, EmbeddingProvider, HttpCompletionProvider, HttpConfig,
    HttpEmbeddingProvider, LlmError, RetryPolicy, SamplingParams,
};
use codechain_core::prompt::{RenderedPrompt, TemplateName};
use serde_json::{json, Value};

struct Server {
    url: String,
    requests: Arc<Mutex<Vec<(String, Value)>>>,
}

/// Serves each scripted (status, body) once, in order, then 500s. With
/// `delay`, every response is held back that long.
fn serve(script: Vec<(u16, String)>, delay: Duration) -> Server {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    let requests = Arc::new(Mutex::new(Vec::new()));
    let seen = requests.clone();
    let script = Arc::new(Mutex::new(script.into_iter()));
    thread::spawn(move || {
        for stream in listener.incoming() {
            let Ok(mut stream) = stream else { continue };
            let seen = seen.clone();
            let script = script.clone();
            thread::spawn(move || {
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut auth = String::new();
                let mut len = 0;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let lower = line.to_ascii_lowercase();
                    if let Some(v) = lower.strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                    if lower.starts_with("authorization:") {
                        auth = line["authorization:".len()..].trim().to_string();
                    }
                }
                let mut body = vec![0; len];
                reader.read_exact(&mut body).unwrap();
                let mut doc: Value = serde_json::from_slice(&body).unwrap();
                doc["_auth"] = json!(auth);
                doc["_path"] = json!(request_line.split_whitespace().nth(1).unwrap_or(""));
                seen.lock().unwrap().push((request_line, doc));
                let (status, text) = script
                    .lock()
                    .unwrap()
                    .next()
                    .unwrap_or((500, "{\"error\":\"exhausted\"}".into()));
                thread::sleep(delay);
                let reply = format!(
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{text}",
                    text.len()
                );
                let _ = stream.write_all(reply.as_bytes());
            });
        }
    });
    Server { url, requests }
}

fn config(url: &str) -> HttpConfig {
    HttpConfig {
        base_url: url.into(),
        model: "test-model".into(),
        api_key: "secret".into(),
        timeout_secs: 5,
        retry: RetryPolicy {
            max_retries: 3,
            initial_backoff_ms: 10,
            max_backoff_ms: 40,
        },
        max_in_flight: 4,
        independent_requests: false,
    }
}

fn prompt() -> RenderedPrompt {
    RenderedPrompt {
        template_name: TemplateName::Cot,
        text: "write a program".into(),
        task_id: "t".into(),
        round_index: 0,
    }
}

fn choices(n: usize) -> String {
    let items: Vec<Value> = (0..n)
        .map(|i| json!({"index": i, "message": {"role": "assistant", "content": format!("answer {i}")}}))
        .collect();
    json!({ "choices": items }).to_string()
}

#[test]
fn transient_fault_then_success() {
    let server = serve(vec![(503, "{}".into()), (200, choices(3))], Duration::ZERO);
    let provider = HttpCompletionProvider::new(config(&server.url));
    let params = SamplingParams { n: 3, ..SamplingParams::default() };
    let batch = provider.complete(&prompt(), &params).unwrap();
    assert_eq!(batch.texts, ["answer 0", "answer 1", "answer 2"]);
    assert_eq!(batch.retries, 1);
    assert_eq!(batch.shortfall, 0);

    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 2);
    let body = &requests[1].1;
    assert_eq!(body["_path"], "/v1/chat/completions");
    assert_eq!(body["_auth"], "Bearer secret");
    assert_eq!(body["model"], "test-model");
    assert_eq!(body["n"], 3);
    assert_eq!(body["temperature"], 0.6);
    assert_eq!(body["max_tokens"], 2048);
    assert_eq!(body["messages"][0]["content"], "write a program");
}

#[test]
fn rate_limit_is_retried() {
    let server = serve(vec![(429, "{}".into()), (429, "{}".into()), (200, choices(2))], Duration::ZERO);
    let provider = HttpCompletionProvider::new(config(&server.url));
    let batch = provider.complete(&prompt(), &SamplingParams { n: 2, ..Default::default() }).unwrap();
    assert_eq!(batch.retries, 2);
    assert_eq!(batch.texts.len(), 2);
}

#[test]
fn exhausted_retries_give_a_partial_batch() {
    let server = serve(vec![], Duration::ZERO);
    let provider = HttpCompletionProvider::new(config(&server.url));
    let batch = provider.complete(&prompt(), &SamplingParams { n: 4, ..Default::default() }).unwrap();
    assert!(batch.texts.is_empty());
    assert_eq!(batch.shortfall, 4);
    assert_eq!(batch.retries, 3);
    assert_eq!(server.requests.lock().unwrap().len(), 4);
}

#[test]
fn short_response_records_shortfall() {
    let server = serve(vec![(200, choices(2))], Duration::ZERO);
    let provider = HttpCompletionProvider::new(config(&server.url));
    let batch = provider.complete(&prompt(), &SamplingParams { n: 5, ..Default::default() }).unwrap();
    assert_eq!(batch.texts.len(), 2);
    assert_eq!(batch.shortfall, 3);
}

#[test]
fn auth_failure_is_fatal_without_retry() {
    let server = serve(vec![(401, "{\"error\":\"bad key\"}".into())], Duration::ZERO);
    let provider = HttpCompletionProvider::new(config(&server.url));
    let err = provider.complete(&prompt(), &SamplingParams::default()).unwrap_err();
    assert!(matches!(err, LlmError::Auth(_)), "{err}");
    assert!(err.is_fatal());
    assert_eq!(server.requests.lock().unwrap().len(), 1);
}

#[test]
fn connection_refused_is_transient() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/v1", listener.local_addr().unwrap());
    drop(listener);
    let provider = HttpCompletionProvider::new(config(&url));
    let batch = provider.complete(&prompt(), &SamplingParams { n: 2, ..Default::default() }).unwrap();
    assert_eq!(batch.shortfall, 2);
    assert_eq!(batch.retries, 3);
}

#[test]
fn independent_requests_respect_the_in_flight_cap() {
    let script = (0..8).map(|_| (200, choices(1))).collect();
    let server = serve(script, Duration::from_millis(50));
    let mut cfg = config(&server.url);
    cfg.independent_requests = true;
    cfg.max_in_flight = 2;
    let provider = HttpCompletionProvider::new(cfg);
    let batch = provider.complete(&prompt(), &SamplingParams { n: 8, ..Default::default() }).unwrap();
    assert_eq!(batch.texts.len(), 8);
    assert!(provider.peak_in_flight() <= 2);
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests.len(), 8);
    assert!(requests.iter().all(|(_, b)| b["n"] == 1));
}

#[test]
fn embeddings_are_batched_and_ordered() {
    let first = json!({"data": [
        {"index": 1, "embedding": [0.0, 1.0]},
        {"index": 0, "embedding": [1.0, 0.0]}
    ]})
    .to_string();
    let second = json!({"data": [{"index": 0, "embedding": [0.5, 0.5]}]}).to_string();
    let server = serve(vec![(200, first), (200, second)], Duration::ZERO);
    let provider = HttpEmbeddingProvider::new(config(&server.url), 2);
    let texts: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
    let vectors = provider.embed_texts(&texts).unwrap();
    assert_eq!(vectors, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
    let requests = server.requests.lock().unwrap();
    assert_eq!(requests[0].1["_path"], "/v1/embeddings");
    assert_eq!(requests[0].1["input"], json!(["a", "b"]));
}

#[test]
fn embedding_failure_after_retries_is_an_error() {
    let server = serve(vec![], Duration::ZERO);
    let provider = HttpEmbeddingProvider::new(config(&server.url), 8);
    assert!(provider.embed_texts(&["x".to_string()]).is_err());
}
