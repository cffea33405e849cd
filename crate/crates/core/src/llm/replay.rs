use std::collections::{BTreeSet, HashMap};
use std::path::Path;
use std::time::Instant;

use super::transcript::{embedding_fingerprint, read_transcript, TranscriptEntry};
use super::{CompletionBatch, CompletionProvider, EmbeddingProvider, LlmError, SamplingParams};
use crate::prompt::RenderedPrompt;

type CompletionKey = (String, String, usize);

/// Serves completions and embeddings recorded in a transcript.
///
/// Completions are keyed by (prompt fingerprint, task id, round), so two
/// tasks that happen to render the same prompt still replay independently.
/// When a key was recorded more than once, the first record wins.
#[derive(Debug, Default, Clone)]
pub struct ReplayProvider {
    id: String,
    completions: HashMap<CompletionKey, Vec<String>>,
    embeddings: HashMap<String, Vec<Vec<f64>>>,
}

impl ReplayProvider {
    pub fn from_entries(id: impl Into<String>, entries: impl IntoIterator<Item = TranscriptEntry>) -> Self {
        let mut provider = Self {
            id: id.into(),
            ..Self::default()
        };
        for entry in entries {
            match entry {
                TranscriptEntry::Completion(c) => {
                    provider
                        .completions
                        .entry((c.fingerprint, c.task_id, c.round_index))
                        .or_insert(c.texts);
                }
                TranscriptEntry::Embedding(e) => {
                    provider.embeddings.entry(e.fingerprint).or_insert(e.vectors);
                }
            }
        }
        provider
    }

    /// The id names the recorded provider rather than the file, so moving
    /// a transcript does not change the results it reproduces.
    pub fn from_path(path: &Path) -> Result<Self, LlmError> {
        let entries = read_transcript(path)?;
        let recorded: BTreeSet<&str> = entries
            .iter()
            .map(|e| match e {
                TranscriptEntry::Completion(c) => c.provider_id.as_str(),
                TranscriptEntry::Embedding(e) => e.provider_id.as_str(),
            })
            .collect();
        let id = match recorded.len() {
            1 => format!("replay:{}", recorded.first().unwrap()),
            _ => "replay".to_string(),
        };
        Ok(Self::from_entries(id, entries))
    }

    pub fn completion_count(&self) -> usize {
        self.completions.len()
    }
}

impl CompletionProvider for ReplayProvider {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn complete(&self, prompt: &RenderedPrompt, params: &SamplingParams) -> Result<CompletionBatch, LlmError> {
        let start = Instant::now();
        let fingerprint = prompt.fingerprint();
        let key = (fingerprint.clone(), prompt.task_id.clone(), prompt.round_index);
        match self.completions.get(&key) {
            Some(texts) if texts.len() >= params.n => Ok(CompletionBatch {
                prompt_fingerprint: fingerprint,
                texts: texts[..params.n].to_vec(),
                provider_id: self.id.clone(),
                latency_ms: start.elapsed().as_millis() as u64,
                retries: 0,
                shortfall: 0,
            }),
            _ => Err(LlmError::TranscriptIncomplete {
                fingerprint,
                task_id: prompt.task_id.clone(),
                round_index: prompt.round_index,
            }),
        }
    }
}

impl EmbeddingProvider for ReplayProvider {
    fn id(&self) -> String {
        self.id.clone()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, LlmError> {
        let fp = embedding_fingerprint(texts);
        match self.embeddings.get(&fp) {
            Some(v) if v.len() == texts.len() => Ok(v.clone()),
            _ => Err(LlmError::EmbeddingsMissing(fp)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::CompletionEntry;
    use crate::prompt::TemplateName;

    fn prompt(text: &str) -> RenderedPrompt {
        RenderedPrompt {
            template_name: TemplateName::Cot,
            text: text.into(),
            task_id: "t1".into(),
            round_index: 0,
        }
    }

    fn entry(p: &RenderedPrompt, texts: Vec<String>) -> TranscriptEntry {
        TranscriptEntry::Completion(CompletionEntry {
            fingerprint: p.fingerprint(),
            task_id: p.task_id.clone(),
            round_index: p.round_index,
            template: p.template_name,
            params: SamplingParams::default(),
            provider_id: "rec".into(),
            texts,
            shortfall: 0,
            retries: 0,
            prompt: p.text.clone(),
        })
    }

    #[test]
    fn replays_verbatim() {
        let p = prompt("solve it");
        let texts: Vec<String> = (0..20).map(|i| format!("sample {i}")).collect();
        let replay = ReplayProvider::from_entries("r", [entry(&p, texts.clone())]);
        let batch = replay.complete(&p, &SamplingParams::default()).unwrap();
        assert_eq!(batch.texts, texts);
        assert_eq!(batch.prompt_fingerprint, p.fingerprint());
    }

    #[test]
    fn miss_names_the_fingerprint() {
        let replay = ReplayProvider::from_entries("r", []);
        let p = prompt("unseen");
        let err = replay.complete(&p, &SamplingParams::default()).unwrap_err();
        assert!(err.to_string().contains("transcript incomplete"));
        assert!(err.to_string().contains(&p.fingerprint()));
        assert!(err.is_fatal());
    }

    #[test]
    fn same_prompt_other_round_is_a_miss() {
        let p = prompt("solve it");
        let replay = ReplayProvider::from_entries("r", [entry(&p, vec!["a".into(); 20])]);
        let later = RenderedPrompt { round_index: 1, ..p };
        assert!(replay.complete(&later, &SamplingParams::default()).is_err());
    }

    #[test]
    fn id_does_not_depend_on_the_file_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = prompt("q");
        let ids: Vec<String> = ["a.jsonl", "nested/b.jsonl"]
            .iter()
            .map(|name| {
                let path = dir.path().join(name);
                std::fs::create_dir_all(path.parent().unwrap()).unwrap();
                let writer = crate::llm::TranscriptWriter::open(&path).unwrap();
                writer.append(&entry(&p, vec!["x".into()])).unwrap();
                CompletionProvider::id(&ReplayProvider::from_path(&path).unwrap())
            })
            .collect();
        assert_eq!(ids, ["replay:rec", "replay:rec"]);
    }
}
