//! The run configuration file.
//!
//! A TOML document whose string values may reference environment variables
//! as `${NAME}` or `${NAME:-fallback}`. Relative paths are resolved against
//! the directory holding the file.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use codechain_core::chain::{config_fingerprint, RoundSelection, RunConfig};
use codechain_core::cluster::{HashedEmbedder, HASHED_DIM};
use codechain_core::eval::FilterKind;
use codechain_core::exec::{ResourceLimits, ShimCommand};
use codechain_core::hashing::sha256_hex;
use codechain_core::llm::{
    CompletionProvider, EmbeddingProvider, HttpCompletionProvider, HttpConfig, HttpEmbeddingProvider, ReplayProvider,
    Transcribing, TranscriptWriter,
};
use codechain_core::{OneShot, TemplateSet};

pub const SHIM_DOUBLE: &str = "codechain-shim-double";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HttpSection {
    #[serde(flatten)]
    pub settings: HttpConfig,
    /// Usually `${CODECHAIN_API_KEY}`; the variable is read when unset.
    #[serde(default)]
    pub api_key: Option<String>,
}

impl HttpSection {
    fn resolve(&self) -> Result<HttpConfig> {
        let mut cfg = self.settings.clone();
        if let Some(key) = &self.api_key {
            cfg.api_key = key.clone();
        }
        Ok(cfg.resolve_env()?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    Replay { transcript: PathBuf },
    Http(HttpSection),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EmbeddingConfig {
    /// Local feature-hashing embedder; needs no service.
    Hashed {
        #[serde(default = "default_dim")]
        dim: usize,
    },
    Http {
        #[serde(flatten)]
        http: HttpSection,
        #[serde(default = "default_batch")]
        batch_size: usize,
    },
    Replay {
        transcript: PathBuf,
    },
}

fn default_dim() -> usize {
    HASHED_DIM
}

fn default_batch() -> usize {
    32
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig::Hashed { dim: HASHED_DIM }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    /// Shim program and arguments; defaults to the bundled test double.
    pub command: Option<Vec<String>>,
    pub limits: ResourceLimits,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub round_selection: String,
    pub ks: Vec<usize>,
    pub filters: Vec<FilterKind>,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            round_selection: "public_proxy".into(),
            ks: vec![1, 5],
            filters: FilterKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CliConfig {
    #[serde(default)]
    pub run: RunConfig,
    pub provider: ProviderConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub sandbox: SandboxConfig,
    #[serde(default)]
    pub evaluation: EvaluationConfig,
    /// Directory with template overrides and the one-shot example.
    #[serde(default)]
    pub templates_dir: Option<PathBuf>,
}

/// Replaces `${NAME}` and `${NAME:-fallback}`. With `strict`, an unset
/// variable without a fallback is an error; otherwise it is left as written.
pub fn interpolate(text: &str, strict: bool) -> Result<String> {
    let mut out = String::with_capacity(text.len());
    let mut rest = text;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after.find('}').ok_or_else(|| anyhow!("unterminated `${{` in config"))?;
        let expr = &after[..end];
        let (name, fallback) = match expr.split_once(":-") {
            Some((n, f)) => (n, Some(f)),
            None => (expr, None),
        };
        match (std::env::var(name), fallback) {
            (Ok(v), _) => out.push_str(&v),
            (Err(_), Some(f)) => out.push_str(f),
            (Err(_), None) if strict => bail!("config references unset environment variable {name}"),
            (Err(_), None) => out.push_str(&rest[start..start + 3 + end]),
        }
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn interpolate_value(value: &mut toml::Value, strict: bool) -> Result<()> {
    match value {
        toml::Value::String(s) => *s = interpolate(s, strict)?,
        toml::Value::Array(items) => {
            for item in items {
                interpolate_value(item, strict)?;
            }
        }
        toml::Value::Table(table) => {
            for (_, item) in table.iter_mut() {
                interpolate_value(item, strict)?;
            }
        }
        _ => {}
    }
    Ok(())
}

/// A parsed config together with its source text and location.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: CliConfig,
    pub text: String,
    pub base_dir: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path, strict: bool) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        Self::parse(&text, &base_dir, strict).with_context(|| format!("config {}", path.display()))
    }

    pub fn parse(text: &str, base_dir: &Path, strict: bool) -> Result<Self> {
        // Interpolating parsed strings keeps substituted values from
        // changing the TOML structure.
        let mut value: toml::Value = toml::from_str(text)?;
        interpolate_value(&mut value, strict)?;
        let config: CliConfig = value.try_into()?;
        config.run.validate().map_err(|e| anyhow!("[run]: {e}"))?;
        config.sandbox.limits.validate().map_err(|e| anyhow!("[sandbox.limits]: {e}"))?;
        config.selection()?;
        if config.evaluation.ks.contains(&0) {
            bail!("[evaluation] ks must be at least 1");
        }
        Ok(Self {
            config,
            text: text.to_string(),
            base_dir: base_dir.to_path_buf(),
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn templates(&self) -> Result<(TemplateSet, OneShot)> {
        match &self.config.templates_dir {
            None => Ok((TemplateSet::builtin(), OneShot::builtin())),
            Some(dir) => {
                let dir = self.resolve(dir);
                let templates = TemplateSet::load_dir(&dir)?;
                let one_shot = if dir.join("oneshot_input.txt").exists() {
                    OneShot::load_dir(&dir)?
                } else {
                    OneShot::builtin()
                };
                Ok((templates, one_shot))
            }
        }
    }

    /// Changes whenever a byte of the config file, a template or the
    /// one-shot example changes.
    pub fn fingerprint(&self) -> Result<String> {
        let (templates, one_shot) = self.templates()?;
        let core = config_fingerprint(&self.config.run, &templates, &one_shot);
        Ok(sha256_hex(format!("{}\u{0}{core}", sha256_hex(self.text.as_bytes())).as_bytes()))
    }
}

impl CliConfig {
    pub fn selection(&self) -> Result<RoundSelection> {
        self.evaluation
            .round_selection
            .parse()
            .map_err(|e: String| anyhow!("[evaluation] {e}"))
    }
}

/// Completion provider for a run, recording every exchange in `writer`.
pub fn completion_provider(loaded: &LoadedConfig, writer: Arc<TranscriptWriter>) -> Result<Arc<dyn CompletionProvider>> {
    let inner: Arc<dyn CompletionProvider> = match &loaded.config.provider {
        ProviderConfig::Replay { transcript } => Arc::new(ReplayProvider::from_path(&loaded.resolve(transcript))?),
        ProviderConfig::Http(http) => Arc::new(HttpCompletionProvider::new(http.resolve()?)),
    };
    Ok(Arc::new(Transcribing::new(inner, writer)))
}

pub fn embedding_provider(loaded: &LoadedConfig, writer: Arc<TranscriptWriter>) -> Result<Arc<dyn EmbeddingProvider>> {
    Ok(match &loaded.config.embedding {
        EmbeddingConfig::Hashed { dim } => {
            if *dim == 0 {
                bail!("[embedding] dim must be at least 1");
            }
            Arc::new(HashedEmbedder { dim: *dim })
        }
        EmbeddingConfig::Http { http, batch_size } => {
            let inner: Arc<dyn EmbeddingProvider> = Arc::new(HttpEmbeddingProvider::new(http.resolve()?, *batch_size));
            Arc::new(Transcribing::new(inner, writer))
        }
        EmbeddingConfig::Replay { transcript } => Arc::new(ReplayProvider::from_path(&loaded.resolve(transcript))?),
    })
}

/// The configured shim, or the test double installed next to this binary.
pub fn shim_command(loaded: &LoadedConfig) -> Result<ShimCommand> {
    match &loaded.config.sandbox.command {
        Some(argv) if !argv.is_empty() => {
            let program = PathBuf::from(&argv[0]);
            let program = if program.components().count() > 1 {
                loaded.resolve(&program)
            } else {
                program
            };
            Ok(ShimCommand::new(program).with_args(argv[1..].iter().cloned()))
        }
        Some(_) => bail!("[sandbox] command is empty"),
        None => {
            let exe = std::env::current_exe().context("locating the running binary")?;
            let dir = exe.parent().ok_or_else(|| anyhow!("binary has no parent directory"))?;
            let mut candidates = vec![dir.join(SHIM_DOUBLE)];
            // Test binaries live one level below the target directory.
            if let Some(up) = dir.parent() {
                candidates.push(up.join(SHIM_DOUBLE));
            }
            candidates
                .into_iter()
                .find(|p| p.exists())
                .map(ShimCommand::new)
                .ok_or_else(|| anyhow!("{SHIM_DOUBLE} not found next to {}; set [sandbox] command", exe.display()))
        }
    }
}
