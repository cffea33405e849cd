//! Append-only JSONL transcript of every provider exchange.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::{CompletionBatch, CompletionProvider, EmbeddingProvider, LlmError, SamplingParams};
use crate::hashing::sha256_hex;
use crate::prompt::{RenderedPrompt, TemplateName};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionEntry {
    pub fingerprint: String,
    pub task_id: String,
    pub round_index: usize,
    pub template: TemplateName,
    pub params: SamplingParams,
    pub provider_id: String,
    pub texts: Vec<String>,
    #[serde(default)]
    pub shortfall: usize,
    #[serde(default)]
    pub retries: u32,
    pub prompt: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingEntry {
    /// Hash of the JSON array of input texts.
    pub fingerprint: String,
    pub provider_id: String,
    pub vectors: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEntry {
    Completion(CompletionEntry),
    Embedding(EmbeddingEntry),
}

pub fn embedding_fingerprint(texts: &[String]) -> String {
    sha256_hex(serde_json::to_string(texts).expect("strings serialize").as_bytes())
}

fn transcript_err(path: &Path, message: impl Into<String>) -> LlmError {
    LlmError::Transcript {
        path: path.display().to_string(),
        message: message.into(),
    }
}

/// Reads every entry. A torn final line (a crash mid-append) is ignored;
/// a malformed line anywhere else is an error.
pub fn read_transcript(path: &Path) -> Result<Vec<TranscriptEntry>, LlmError> {
    let file = File::open(path).map_err(|e| transcript_err(path, e.to_string()))?;
    let lines: Vec<String> = BufReader::new(file)
        .lines()
        .collect::<Result<_, _>>()
        .map_err(|e| transcript_err(path, e.to_string()))?;
    let mut entries = Vec::with_capacity(lines.len());
    let last = lines.len().saturating_sub(1);
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(entry) => entries.push(entry),
            Err(e) if i == last => log::warn!("{}: ignoring torn final line: {e}", path.display()),
            Err(e) => return Err(transcript_err(path, format!("line {}: {e}", i + 1))),
        }
    }
    Ok(entries)
}

/// Exclusive appender shared by all workers.
#[derive(Debug)]
pub struct TranscriptWriter {
    path: PathBuf,
    file: Mutex<File>,
}

impl TranscriptWriter {
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| transcript_err(path, e.to_string()))?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(&self, entry: &TranscriptEntry) -> Result<(), LlmError> {
        let mut line = serde_json::to_string(entry).map_err(|e| transcript_err(&self.path, e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().expect("transcript lock");
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| transcript_err(&self.path, e.to_string()))
    }
}

/// Records every exchange of the wrapped provider.
pub struct Transcribing<P: ?Sized> {
    inner: Arc<P>,
    writer: Arc<TranscriptWriter>,
}

impl<P: ?Sized> Transcribing<P> {
    pub fn new(inner: Arc<P>, writer: Arc<TranscriptWriter>) -> Self {
        Self { inner, writer }
    }
}

impl<P: CompletionProvider + ?Sized> CompletionProvider for Transcribing<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn complete(&self, prompt: &RenderedPrompt, params: &SamplingParams) -> Result<CompletionBatch, LlmError> {
        let batch = self.inner.complete(prompt, params)?;
        self.writer.append(&TranscriptEntry::Completion(CompletionEntry {
            fingerprint: batch.prompt_fingerprint.clone(),
            task_id: prompt.task_id.clone(),
            round_index: prompt.round_index,
            template: prompt.template_name,
            params: *params,
            provider_id: batch.provider_id.clone(),
            texts: batch.texts.clone(),
            shortfall: batch.shortfall,
            retries: batch.retries,
            prompt: prompt.text.clone(),
        }))?;
        Ok(batch)
    }
}

impl<P: EmbeddingProvider + ?Sized> EmbeddingProvider for Transcribing<P> {
    fn id(&self) -> String {
        self.inner.id()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let vectors = self.inner.embed_texts(texts)?;
        self.writer.append(&TranscriptEntry::Embedding(EmbeddingEntry {
            fingerprint: embedding_fingerprint(texts),
            provider_id: self.inner.id(),
            vectors: vectors.clone(),
        }))?;
        Ok(vectors)
    }
}
