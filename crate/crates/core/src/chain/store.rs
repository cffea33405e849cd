//! On-disk layout of a run directory.
//!
//! ```text
//! <run>/manifest.json
//! <run>/config.toml
//! <run>/transcript.jsonl
//! <run>/tasks/<task>/round_<r>.json
//! <run>/tasks/<task>/chain.json
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ChainResult, RoundRecord};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {message}")]
    Corrupt { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Writes pretty JSON through a temporary file and a rename, skipping the
/// write when the file already holds the same bytes.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let mut text = serde_json::to_string_pretty(value).expect("record serializes");
    text.push('\n');
    if fs::read_to_string(path).is_ok_and(|old| old == text) {
        return Ok(());
    }
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(io_err(parent))?;
    }
    let tmp = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

/// Per-task directory holding round checkpoints and the finished chain.
#[derive(Debug, Clone)]
pub struct TaskStore {
    dir: PathBuf,
}

pub const CHAIN_FILE: &str = "chain.json";

impl TaskStore {
    pub fn new(run_dir: &Path, task_id: &str) -> Self {
        let file = crate::task::task_file_name(task_id);
        let name = file.strip_suffix(".json").unwrap_or(&file);
        Self {
            dir: run_dir.join("tasks").join(name),
        }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn round_path(&self, round: usize) -> PathBuf {
        self.dir.join(format!("round_{round}.json"))
    }

    pub fn chain_path(&self) -> PathBuf {
        self.dir.join(CHAIN_FILE)
    }

    /// Rounds 0, 1, ... up to the first one missing.
    pub fn load_rounds(&self) -> Result<Vec<RoundRecord>, StoreError> {
        let mut rounds = Vec::new();
        loop {
            let path = self.round_path(rounds.len());
            if !path.exists() {
                return Ok(rounds);
            }
            let record: RoundRecord = read_json(&path)?;
            if record.round_index != rounds.len() {
                return Err(StoreError::Corrupt {
                    path,
                    message: format!("holds round {}", record.round_index),
                });
            }
            rounds.push(record);
        }
    }

    pub fn save_round(&self, record: &RoundRecord) -> Result<(), StoreError> {
        write_json(&self.round_path(record.round_index), record)
    }

    pub fn save_chain(&self, chain: &ChainResult) -> Result<(), StoreError> {
        write_json(&self.chain_path(), chain)
    }

    pub fn load_chain(&self) -> Result<Option<ChainResult>, StoreError> {
        let path = self.chain_path();
        if !path.exists() {
            return Ok(None);
        }
        read_json(&path).map(Some)
    }
}

/// Identity of a run directory, written once when the run starts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub config_fingerprint: String,
    pub dataset_name: String,
    pub split: String,
    pub task_ids: Vec<String>,
    pub completion_provider: String,
    pub embedding_provider: String,
    /// (template name, SHA-256) pairs, one-shot example included.
    pub template_checksums: Vec<(String, String)>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Directory the config file was read from; relative paths in the
    /// stored copy resolve against it.
    #[serde(default)]
    pub config_dir: Option<PathBuf>,
}

pub const RUN_MANIFEST_FILE: &str = "manifest.json";

impl RunManifest {
    pub fn path(run_dir: &Path) -> PathBuf {
        run_dir.join(RUN_MANIFEST_FILE)
    }

    pub fn load(run_dir: &Path) -> Result<Self, StoreError> {
        read_json(&Self::path(run_dir))
    }

    pub fn save(&self, run_dir: &Path) -> Result<(), StoreError> {
        write_json(&Self::path(run_dir), self)
    }
}
