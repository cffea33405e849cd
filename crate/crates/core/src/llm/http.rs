//! Live providers over the common chat-completions / embeddings wire shape.

use std::thread;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{
    CompletionBatch, CompletionProvider, EmbeddingProvider, Gate, LlmError, SamplingParams,
    ENV_API_KEY, ENV_BASE_URL, ENV_MODEL,
};
use crate::prompt::RenderedPrompt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    pub fn backoff(&self, retry: u32) -> Duration {
        let ms = self
            .initial_backoff_ms
            .saturating_mul(1u64 << retry.min(20))
            .min(self.max_backoff_ms);
        Duration::from_millis(ms)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: String,
    pub timeout_secs: u64,
    pub retry: RetryPolicy,
    pub max_in_flight: usize,
    /// Issue n single-sample requests instead of one request with `n`.
    pub independent_requests: bool,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: String::new(),
            api_key: String::new(),
            timeout_secs: 120,
            retry: RetryPolicy::default(),
            max_in_flight: 4,
            independent_requests: false,
        }
    }
}

impl HttpConfig {
    /// Fills key, and base URL / model when unset, from the environment.
    pub fn resolve_env(mut self) -> Result<Self, LlmError> {
        if self.api_key.is_empty() {
            self.api_key = std::env::var(ENV_API_KEY)
                .map_err(|_| LlmError::Config(format!("{ENV_API_KEY} is not set")))?;
        }
        if let Ok(url) = std::env::var(ENV_BASE_URL) {
            if !url.is_empty() {
                self.base_url = url;
            }
        }
        if self.model.is_empty() {
            self.model = std::env::var(ENV_MODEL).unwrap_or_default();
        }
        if self.model.is_empty() {
            return Err(LlmError::Config(format!("no model configured (set {ENV_MODEL})")));
        }
        Ok(self)
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

enum Attempt {
    Done(Value),
    Transient(String),
    Fatal(LlmError),
}

struct Client {
    config: HttpConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl Client {
    fn new(config: HttpConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs.max(1))))
            .http_status_as_error(false)
            .build()
            .into();
        let gate = Gate::new(config.max_in_flight);
        Self { config, agent, gate }
    }

    fn attempt(&self, url: &str, body: &Value) -> Attempt {
        let _permit = self.gate.acquire();
        let response = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {}", self.config.api_key))
            .send_json(body);
        let mut response = match response {
            Ok(r) => r,
            Err(e) => return Attempt::Transient(format!("transport: {e}")),
        };
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().unwrap_or_default();
        match status {
            200..=299 => match serde_json::from_str(&text) {
                Ok(v) => Attempt::Done(v),
                Err(e) => Attempt::Transient(format!("unparseable response body: {e}")),
            },
            401 | 403 => Attempt::Fatal(LlmError::Auth(format!("HTTP {status}: {}", snippet(&text)))),
            408 | 409 | 429 | 500..=599 => Attempt::Transient(format!("HTTP {status}: {}", snippet(&text))),
            _ => Attempt::Fatal(LlmError::Request(format!("HTTP {status}: {}", snippet(&text)))),
        }
    }

    /// Posts with retries. Returns the body (or the last transient failure)
    /// and the number of retries spent.
    fn post(&self, path: &str, body: &Value) -> Result<(Result<Value, String>, u32), LlmError> {
        let url = self.config.url(path);
        let policy = self.config.retry;
        let mut retries = 0;
        loop {
            match self.attempt(&url, body) {
                Attempt::Done(v) => return Ok((Ok(v), retries)),
                Attempt::Fatal(e) => return Err(e),
                Attempt::Transient(msg) => {
                    if retries >= policy.max_retries {
                        log::warn!("{url}: giving up after {retries} retries: {msg}");
                        return Ok((Err(msg), retries));
                    }
                    log::debug!("{url}: transient failure ({msg}), retrying");
                    thread::sleep(policy.backoff(retries));
                    retries += 1;
                }
            }
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(200).collect()
}

fn choice_texts(body: &Value) -> Vec<String> {
    body.get("choices")
        .and_then(Value::as_array)
        .map(|choices| {
            choices
                .iter()
                .filter_map(|c| {
                    c.pointer("/message/content")
                        .or_else(|| c.get("text"))
                        .and_then(Value::as_str)
                        .map(str::to_string)
                })
                .collect()
        })
        .unwrap_or_default()
}

pub struct HttpCompletionProvider {
    client: Client,
}

impl HttpCompletionProvider {
    pub fn new(config: HttpConfig) -> Self {
        Self {
            client: Client::new(config),
        }
    }

    /// Highest number of concurrent requests observed so far.
    pub fn peak_in_flight(&self) -> usize {
        self.client.gate.peak()
    }

    fn request(&self, prompt: &RenderedPrompt, params: &SamplingParams, n: usize) -> Result<(Vec<String>, u32), LlmError> {
        let body = json!({
            "model": self.client.config.model,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "n": n,
        });
        let (result, retries) = self.client.post("chat/completions", &body)?;
        let mut texts = result.map(|v| choice_texts(&v)).unwrap_or_default();
        texts.truncate(n);
        Ok((texts, retries))
    }
}

impl CompletionProvider for HttpCompletionProvider {
    fn id(&self) -> String {
        format!("http:{}@{}", self.client.config.model, self.client.config.base_url)
    }

    fn complete(&self, prompt: &RenderedPrompt, params: &SamplingParams) -> Result<CompletionBatch, LlmError> {
        let start = Instant::now();
        let (texts, retries) = if self.client.config.independent_requests {
            let results: Vec<Result<(Vec<String>, u32), LlmError>> = thread::scope(|s| {
                let handles: Vec<_> = (0..params.n)
                    .map(|_| s.spawn(|| self.request(prompt, params, 1)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("request thread")).collect()
            });
            let mut texts = Vec::new();
            let mut retries = 0;
            for r in results {
                let (t, n) = r?;
                texts.extend(t);
                retries += n;
            }
            (texts, retries)
        } else {
            self.request(prompt, params, params.n)?
        };
        let shortfall = params.n - texts.len();
        if shortfall > 0 {
            log::warn!("task {} round {}: {shortfall} of {} completions missing", prompt.task_id, prompt.round_index, params.n);
        }
        Ok(CompletionBatch {
            prompt_fingerprint: prompt.fingerprint(),
            texts,
            provider_id: self.id(),
            latency_ms: start.elapsed().as_millis() as u64,
            retries,
            shortfall,
        })
    }
}

pub struct HttpEmbeddingProvider {
    client: Client,
    batch_size: usize,
}

impl HttpEmbeddingProvider {
    pub fn new(config: HttpConfig, batch_size: usize) -> Self {
        Self {
            client: Client::new(config),
            batch_size: batch_size.max(1),
        }
    }
}

impl EmbeddingProvider for HttpEmbeddingProvider {
    fn id(&self) -> String {
        format!("http-embed:{}@{}", self.client.config.model, self.client.config.base_url)
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.batch_size) {
            let body = json!({"model": self.client.config.model, "input": chunk});
            let (result, _) = self.client.post("embeddings", &body)?;
            let value = result.map_err(LlmError::Request)?;
            let mut data: Vec<(u64, Vec<f64>)> = value
                .get("data")
                .and_then(Value::as_array)
                .ok_or_else(|| LlmError::Request("embedding response without data".into()))?
                .iter()
                .enumerate()
                .map(|(i, d)| {
                    let index = d.get("index").and_then(Value::as_u64).unwrap_or(i as u64);
                    let vector = d
                        .get("embedding")
                        .and_then(Value::as_array)
                        .map(|xs| xs.iter().filter_map(Value::as_f64).collect())
                        .unwrap_or_default();
                    (index, vector)
                })
                .collect();
            data.sort_by_key(|(i, _)| *i);
            if data.len() != chunk.len() || data.iter().any(|(_, v)| v.is_empty()) {
                return Err(LlmError::Request(format!(
                    "expected {} embeddings, got {}",
                    chunk.len(),
                    data.len()
                )));
            }
            out.extend(data.into_iter().map(|(_, v)| v));
        }
        Ok(out)
    }
}
