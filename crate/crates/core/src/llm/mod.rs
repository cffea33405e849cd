//! Completion providers: a live chat-completions client and a replay
//! provider over recorded transcripts.

mod http;
mod replay;
mod transcript;

use std::sync::{Condvar, Mutex};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::RenderedPrompt;

pub use http::{HttpCompletionProvider, HttpConfig, HttpEmbeddingProvider, RetryPolicy};
pub use replay::ReplayProvider;
pub use transcript::{
    read_transcript, CompletionEntry, EmbeddingEntry, TranscriptEntry, TranscriptWriter,
    Transcribing,
};

pub const ENV_API_KEY: &str = "CODECHAIN_API_KEY";
pub const ENV_BASE_URL: &str = "CODECHAIN_BASE_URL";
pub const ENV_MODEL: &str = "CODECHAIN_MODEL";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplingParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub n: usize,
}

impl Default for SamplingParams {
    fn default() -> Self {
        Self {
            temperature: 0.6,
            max_tokens: 2048,
            n: 20,
        }
    }
}

impl SamplingParams {
    pub fn validate(&self) -> Result<(), String> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(format!("temperature must be >= 0, got {}", self.temperature));
        }
        if self.n == 0 {
            return Err("n must be at least 1".into());
        }
        if self.max_tokens == 0 {
            return Err("max_tokens must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionBatch {
    pub prompt_fingerprint: String,
    pub texts: Vec<String>,
    pub provider_id: String,
    pub latency_ms: u64,
    /// Failed attempts that were retried.
    #[serde(default)]
    pub retries: u32,
    /// Requested completions that never arrived.
    #[serde(default)]
    pub shortfall: usize,
}

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("transcript incomplete: no completions recorded for prompt {fingerprint} (task {task_id}, round {round_index})")]
    TranscriptIncomplete {
        fingerprint: String,
        task_id: String,
        round_index: usize,
    },
    #[error("transcript incomplete: no embeddings recorded for batch {0}")]
    EmbeddingsMissing(String),
    #[error("authentication rejected by provider: {0}")]
    Auth(String),
    #[error("provider configuration: {0}")]
    Config(String),
    #[error("provider request failed: {0}")]
    Request(String),
    #[error("transcript {path}: {message}")]
    Transcript { path: String, message: String },
}

impl LlmError {
    /// Errors after which a run cannot continue.
    pub fn is_fatal(&self) -> bool {
        !matches!(self, LlmError::Request(_))
    }
}

pub trait CompletionProvider: Send + Sync {
    fn id(&self) -> String;

    fn complete(&self, prompt: &RenderedPrompt, params: &SamplingParams) -> Result<CompletionBatch, LlmError>;
}

pub trait EmbeddingProvider: Send + Sync {
    fn id(&self) -> String;

    /// One vector per text, in order.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError>;
}

/// Counting semaphore capping in-flight requests.
#[derive(Debug)]
pub struct Gate {
    cap: usize,
    state: Mutex<(usize, usize)>,
    freed: Condvar,
}

pub struct GatePermit<'a>(&'a Gate);

impl Gate {
    pub fn new(cap: usize) -> Self {
        Self {
            cap: cap.max(1),
            state: Mutex::new((0, 0)),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut st = self.state.lock().expect("gate lock");
        while st.0 >= self.cap {
            st = self.freed.wait(st).expect("gate lock");
        }
        st.0 += 1;
        st.1 = st.1.max(st.0);
        GatePermit(self)
    }

    /// Highest number of permits ever held at once.
    pub fn peak(&self) -> usize {
        self.state.lock().expect("gate lock").1
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut st = self.0.state.lock().expect("gate lock");
        st.0 -= 1;
        self.0.freed.notify_one();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;
    use std::time::Duration;

    #[test]
    fn defaults() {
        let p = SamplingParams::default();
        assert_eq!((p.temperature, p.max_tokens, p.n), (0.6, 2048, 20));
        let partial: SamplingParams = serde_json::from_str(r#"{"n": 4}"#).unwrap();
        assert_eq!((partial.temperature, partial.max_tokens, partial.n), (0.6, 2048, 4));
        assert!(SamplingParams { n: 0, ..p }.validate().is_err());
        assert!(SamplingParams { temperature: -1.0, ..p }.validate().is_err());
    }

    #[test]
    fn gate_caps_concurrency() {
        let gate = Arc::new(Gate::new(3));
        let handles: Vec<_> = (0..12)
            .map(|_| {
                let g = gate.clone();
                std::thread::spawn(move || {
                    let _p = g.acquire();
                    std::thread::sleep(Duration::from_millis(10));
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
        assert!(gate.peak() <= 3);
        assert!(gate.peak() >= 1);
    }
}
