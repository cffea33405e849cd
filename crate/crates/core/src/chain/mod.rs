//! The per-task revision chain: direct generation, then rounds of
//! filter, sub-module gathering, clustering and conditioned regeneration.

mod store;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::cluster::{embed, kmeans, schedule_k, select_centroids, ClusterAssignment, ClusterError, ClusterSchedule};
use crate::exec::{filter_by_public_tests, Executor, PublicFilter, TestReport};
use crate::extract::CandidateSolution;
use crate::hashing::{fnv1a64, sha256_hex};
use crate::llm::{CompletionProvider, EmbeddingProvider, LlmError, SamplingParams};
use crate::prompt::{build_cot_prompt, build_revision_prompt, FeedbackItem, OneShot, PromptError, RenderedPrompt, TemplateSet};
use crate::task::Task;

pub use store::{read_json, write_json, RunManifest, StoreError, TaskStore, CHAIN_FILE, RUN_MANIFEST_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeedbackMode {
    #[serde(rename = "C-M", alias = "centroid_submodules")]
    CentroidSubmodules,
    #[serde(rename = "R-M", alias = "random_submodules")]
    RandomSubmodules,
    #[serde(rename = "C-P", alias = "centroid_programs")]
    CentroidPrograms,
    #[serde(rename = "R-P", alias = "random_programs")]
    RandomPrograms,
}

impl FeedbackMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FeedbackMode::CentroidSubmodules => "C-M",
            FeedbackMode::RandomSubmodules => "R-M",
            FeedbackMode::CentroidPrograms => "C-P",
            FeedbackMode::RandomPrograms => "R-P",
        }
    }

    pub fn uses_clustering(self) -> bool {
        matches!(self, FeedbackMode::CentroidSubmodules | FeedbackMode::CentroidPrograms)
    }

    pub fn uses_submodules(self) -> bool {
        matches!(self, FeedbackMode::CentroidSubmodules | FeedbackMode::RandomSubmodules)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum RoundSelection {
    PublicProxy,
    FixedRound { round: usize },
}

impl std::str::FromStr for RoundSelection {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if s == "public_proxy" || s == "public-proxy" {
            return Ok(RoundSelection::PublicProxy);
        }
        let number = s
            .strip_prefix("fixed_round=")
            .or_else(|| s.strip_prefix("fixed="))
            .or_else(|| s.strip_prefix("round="))
            .unwrap_or(s);
        number
            .parse()
            .map(|round| RoundSelection::FixedRound { round })
            .map_err(|_| format!("unknown round selection `{s}` (use public_proxy or fixed_round=<n>)"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub samples_per_round: usize,
    pub max_rounds: usize,
    pub schedule: ClusterSchedule,
    pub sampling: SamplingParams,
    pub use_public_filter: bool,
    pub revision_feedback: FeedbackMode,
    pub seed: u64,
    /// Scale embeddings to unit length before clustering.
    pub normalize_embeddings: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            samples_per_round: 20,
            max_rounds: 5,
            schedule: ClusterSchedule::default(),
            sampling: SamplingParams::default(),
            use_public_filter: true,
            revision_feedback: FeedbackMode::CentroidSubmodules,
            seed: 0,
            normalize_embeddings: true,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.samples_per_round == 0 {
            return Err("samples_per_round must be at least 1".into());
        }
        self.schedule.validate()?;
        self.sampling().validate()
    }

    /// Sampling parameters with `n` tied to the per-round budget.
    pub fn sampling(&self) -> SamplingParams {
        SamplingParams {
            n: self.samples_per_round,
            ..self.sampling
        }
    }
}

/// Hash of everything that shapes a run's outputs: the run config, the
/// templates and the one-shot example.
pub fn config_fingerprint(config: &RunConfig, templates: &TemplateSet, one_shot: &OneShot) -> String {
    let doc = serde_json::json!({
        "config": config,
        "templates": templates.checksums(),
        "one_shot": one_shot.checksum(),
    });
    sha256_hex(doc.to_string().as_bytes())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub parsed: usize,
    /// Share of candidates passing every public test; absent without public tests.
    pub public_pass_rate: Option<f64>,
    pub private_correct: usize,
    pub private_pass_rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round_index: usize,
    pub prompts: Vec<RenderedPrompt>,
    pub provider_id: String,
    pub completions_requested: usize,
    pub shortfall: usize,
    pub retries: u32,
    pub latency_ms: u64,
    pub candidates: Vec<CandidateSolution>,
    pub public_reports: Vec<TestReport>,
    pub private_reports: Vec<TestReport>,
    /// Public-filter outcome over this round's candidates; the next round
    /// draws its feedback from `filtered_ids`.
    pub filtered_ids: Vec<usize>,
    pub filter_fallback: bool,
    /// Ids from the previous round whose units were considered for feedback.
    pub feedback_pool: Vec<usize>,
    pub cluster_k: Option<usize>,
    pub cluster_assignment: Option<ClusterAssignment>,
    pub selected_feedback: Vec<FeedbackItem>,
    /// Feedback was copied from an earlier round because the previous round
    /// offered nothing to select from.
    pub feedback_reused: bool,
    /// No candidate in this round produced code.
    pub degenerate: bool,
    pub metrics: RoundMetrics,
    #[serde(default)]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainResult {
    pub task_id: String,
    pub rounds: Vec<RoundRecord>,
    pub best_round: usize,
    pub config_fingerprint: String,
}

const VOLATILE_KEYS: [&str; 3] = ["latency_ms", "elapsed_ms", "wall"];

fn strip_volatile(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for key in VOLATILE_KEYS {
                map.remove(key);
            }
            map.values_mut().for_each(strip_volatile);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_volatile),
        _ => {}
    }
}

impl ChainResult {
    /// SHA-256 of the canonical JSON form with timing fields removed.
    pub fn fingerprint(&self) -> String {
        let mut value = serde_json::to_value(self).expect("chain result serializes");
        strip_volatile(&mut value);
        sha256_hex(value.to_string().as_bytes())
    }

    pub fn completions_requested(&self) -> usize {
        self.rounds.iter().map(|r| r.completions_requested).sum()
    }
}

/// Round to report for a chain. Public-proxy picks the round with the
/// highest public pass rate, earliest on ties, and falls back to the last
/// round when the task has no public tests. A fixed round past the end of
/// the chain is clamped to the last round.
pub fn select_best_round(rounds: &[RoundRecord], rule: RoundSelection) -> usize {
    assert!(!rounds.is_empty(), "a chain has at least one round");
    let last = rounds.len() - 1;
    match rule {
        RoundSelection::FixedRound { round } => {
            if round > last {
                log::warn!("fixed round {round} is past the last round {last}; using {last}");
            }
            round.min(last)
        }
        RoundSelection::PublicProxy => {
            let mut best: Option<(f64, usize)> = None;
            for (i, r) in rounds.iter().enumerate() {
                if let Some(rate) = r.metrics.public_pass_rate {
                    if best.is_none_or(|(b, _)| rate > b) {
                        best = Some((rate, i));
                    }
                }
            }
            best.map_or_else(
                || {
                    log::warn!("no public tests to rank rounds by; using the last round");
                    last
                },
                |(_, i)| i,
            )
        }
    }
}

#[derive(Debug, Error)]
pub enum ChainError {
    #[error("task {task}: {source}")]
    Prompt {
        task: String,
        #[source]
        source: PromptError,
    },
    #[error("task {task}, round {round}: {source}")]
    Provider {
        task: String,
        round: usize,
        #[source]
        source: LlmError,
    },
    #[error("task {task}, round {round}: {source}")]
    Cluster {
        task: String,
        round: usize,
        #[source]
        source: ClusterError,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("invalid run config: {0}")]
    Config(String),
}

impl ChainError {
    /// Whether the run as a whole must stop.
    pub fn is_fatal(&self) -> bool {
        match self {
            ChainError::Provider { source, .. } => source.is_fatal(),
            ChainError::Cluster {
                source: ClusterError::Provider(e),
                ..
            } => e.is_fatal(),
            ChainError::Store(_) | ChainError::Config(_) => true,
            _ => false,
        }
    }
}

/// Everything a chain needs besides the task.
pub struct ChainContext<'a> {
    pub config: &'a RunConfig,
    pub templates: &'a TemplateSet,
    pub one_shot: &'a OneShot,
    pub completer: &'a dyn CompletionProvider,
    pub embedder: &'a dyn EmbeddingProvider,
    pub executor: &'a Executor,
    pub config_fingerprint: String,
    /// How the reported round is chosen.
    pub selection: RoundSelection,
}

/// Seed for one (task, round) pair, independent of scheduling order.
pub fn round_seed(seed: u64, task_id: &str, round: usize) -> u64 {
    fnv1a64(format!("{seed}\u{0}{task_id}\u{0}{round}").as_bytes())
}

struct Selection {
    pool: Vec<usize>,
    k: Option<usize>,
    assignment: Option<ClusterAssignment>,
    items: Vec<FeedbackItem>,
}

fn feedback_units(prev: &RoundRecord, pool: &[usize], mode: FeedbackMode) -> Vec<FeedbackItem> {
    let mut units = Vec::new();
    for c in prev.candidates.iter().filter(|c| c.is_parsed() && pool.contains(&c.sample_id)) {
        if mode.uses_submodules() {
            units.extend(c.submodules.iter().cloned().map(FeedbackItem::SubModule));
        } else {
            units.push(FeedbackItem::Program {
                sample_id: c.sample_id,
                round_index: c.round_index,
                code: c.code.clone(),
            });
        }
    }
    units
}

fn select_feedback(ctx: &ChainContext<'_>, task: &Task, prev: &RoundRecord, round: usize) -> Result<Selection, ChainError> {
    let cfg = ctx.config;
    let pool = if cfg.use_public_filter {
        prev.filtered_ids.clone()
    } else {
        prev.candidates.iter().map(|c| c.sample_id).collect()
    };
    let units = feedback_units(prev, &pool, cfg.revision_feedback);
    let mut selection = Selection {
        pool,
        k: None,
        assignment: None,
        items: Vec::new(),
    };
    if units.is_empty() {
        return Ok(selection);
    }
    let seed = round_seed(cfg.seed, &task.id, round);
    let cluster_err = |source| ChainError::Cluster {
        task: task.id.clone(),
        round,
        source,
    };
    let needs_vectors = cfg.revision_feedback.uses_clustering() || cfg.schedule.scheme == crate::cluster::Scheme::Dynamic;
    let vectors = if needs_vectors {
        let texts: Vec<String> = units.iter().map(FeedbackItem::text).collect();
        Some(embed(&texts, ctx.embedder, cfg.normalize_embeddings).map_err(cluster_err)?)
    } else {
        None
    };
    let k = schedule_k(&cfg.schedule, round, vectors.as_deref(), seed);
    selection.k = Some(k);
    if cfg.revision_feedback.uses_clustering() {
        let vectors = vectors.expect("clustering modes embed");
        let assignment = kmeans(&vectors, k, seed);
        selection.items = select_centroids(&assignment, &vectors, &units, FeedbackItem::order_key);
        selection.assignment = Some(assignment);
    } else {
        let count = k.min(units.len());
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked: Vec<FeedbackItem> = sample(&mut rng, units.len(), count).into_iter().map(|i| units[i].clone()).collect();
        picked.sort_by_key(FeedbackItem::order_key);
        selection.items = picked;
    }
    Ok(selection)
}

fn pass_rate(reports: &[TestReport], candidates: usize) -> Option<f64> {
    (candidates > 0).then(|| reports.iter().filter(|r| r.all_passed).count() as f64 / candidates as f64)
}

fn generate_round(
    ctx: &ChainContext<'_>,
    task: &Task,
    round: usize,
    prompt: RenderedPrompt,
    selection: Selection,
    feedback_reused: bool,
    mut notes: Vec<String>,
) -> Result<RoundRecord, ChainError> {
    let params = ctx.config.sampling();
    let batch = match ctx.completer.complete(&prompt, &params) {
        Ok(batch) => batch,
        Err(e) if !e.is_fatal() => {
            log::warn!("task {}, round {round}: {e}; recording an empty round", task.id);
            notes.push(format!("provider error: {e}"));
            crate::llm::CompletionBatch {
                prompt_fingerprint: prompt.fingerprint(),
                texts: Vec::new(),
                provider_id: ctx.completer.id(),
                latency_ms: 0,
                retries: 0,
                shortfall: params.n,
            }
        }
        Err(source) => {
            return Err(ChainError::Provider {
                task: task.id.clone(),
                round,
                source,
            })
        }
    };
    let candidates: Vec<CandidateSolution> = batch
        .texts
        .iter()
        .take(params.n)
        .enumerate()
        .map(|(i, text)| CandidateSolution::from_completion(&task.id, round, i, text))
        .collect();
    let parsed = candidates.iter().filter(|c| c.is_parsed()).count();
    let degenerate = parsed == 0;
    if degenerate {
        notes.push("no candidate produced code".into());
    }

    let fn_name = task.fn_name.as_deref();
    let public_reports = if task.public_tests.is_empty() {
        Vec::new()
    } else {
        ctx.executor.evaluate(&candidates, &task.public_tests, task.io_mode, fn_name)
    };
    let private_reports = if task.private_tests.is_empty() {
        Vec::new()
    } else {
        ctx.executor.evaluate(&candidates, &task.private_tests, task.io_mode, fn_name)
    };
    let PublicFilter { kept, fallback } = filter_by_public_tests(&candidates, &public_reports, !task.public_tests.is_empty());
    let private_correct = private_reports.iter().filter(|r| r.all_passed).count();
    let metrics = RoundMetrics {
        parsed,
        public_pass_rate: if task.public_tests.is_empty() {
            None
        } else {
            pass_rate(&public_reports, candidates.len())
        },
        private_correct,
        private_pass_rate: if task.private_tests.is_empty() {
            None
        } else {
            pass_rate(&private_reports, candidates.len())
        },
    };
    Ok(RoundRecord {
        round_index: round,
        prompts: vec![prompt],
        provider_id: batch.provider_id,
        completions_requested: params.n,
        shortfall: batch.shortfall.max(params.n.saturating_sub(candidates.len())),
        retries: batch.retries,
        latency_ms: batch.latency_ms,
        candidates,
        public_reports,
        private_reports,
        filtered_ids: kept,
        filter_fallback: fallback,
        feedback_pool: selection.pool,
        cluster_k: selection.k,
        cluster_assignment: selection.assignment,
        selected_feedback: selection.items,
        feedback_reused,
        degenerate,
        metrics,
        notes,
    })
}

fn run_round(ctx: &ChainContext<'_>, task: &Task, rounds: &[RoundRecord]) -> Result<RoundRecord, ChainError> {
    let round = rounds.len();
    let prompt_err = |source| ChainError::Prompt {
        task: task.id.clone(),
        source,
    };
    if round == 0 {
        let prompt = build_cot_prompt(ctx.templates, task, ctx.one_shot).map_err(prompt_err)?;
        let empty = Selection {
            pool: Vec::new(),
            k: None,
            assignment: None,
            items: Vec::new(),
        };
        return generate_round(ctx, task, 0, prompt, empty, false, Vec::new());
    }

    let prev = &rounds[round - 1];
    let mut selection = select_feedback(ctx, task, prev, round)?;
    let mut notes = Vec::new();
    let mut reused = false;
    if selection.items.is_empty() {
        // Nothing to select from: carry the latest feedback forward.
        if let Some(earlier) = rounds.iter().rev().find(|r| !r.selected_feedback.is_empty()) {
            selection.items = earlier.selected_feedback.clone();
            reused = true;
            notes.push(format!("no feedback units in round {}; reusing round {} feedback", round - 1, earlier.round_index));
        }
    }
    let prompt = if selection.items.is_empty() {
        notes.push("no feedback available; using the direct-generation prompt".into());
        let mut p = build_cot_prompt(ctx.templates, task, ctx.one_shot).map_err(prompt_err)?;
        p.round_index = round;
        p
    } else {
        build_revision_prompt(ctx.templates, task, &selection.items, ctx.one_shot, round).map_err(prompt_err)?
    };
    for note in &notes {
        log::info!("task {}, round {round}: {note}", task.id);
    }
    generate_round(ctx, task, round, prompt, selection, reused, notes)
}

/// Runs (or resumes) the chain for one task. With a store, rounds already
/// on disk are loaded instead of regenerated and each new round is saved
/// before the next one starts.
pub fn run_chain(ctx: &ChainContext<'_>, task: &Task, store: Option<&TaskStore>) -> Result<ChainResult, ChainError> {
    ctx.config.validate().map_err(ChainError::Config)?;
    let mut rounds = match store {
        Some(s) => s.load_rounds()?,
        None => Vec::new(),
    };
    rounds.truncate(ctx.config.max_rounds + 1);
    if !rounds.is_empty() {
        log::info!("task {}: resuming after {} stored round(s)", task.id, rounds.len());
    }
    while rounds.len() <= ctx.config.max_rounds {
        let record = run_round(ctx, task, &rounds)?;
        if let Some(s) = store {
            s.save_round(&record)?;
        }
        rounds.push(record);
    }
    let best_round = select_best_round(&rounds, ctx.selection);
    let result = ChainResult {
        task_id: task.id.clone(),
        rounds,
        best_round,
        config_fingerprint: ctx.config_fingerprint.clone(),
    };
    if let Some(s) = store {
        s.save_chain(&result)?;
    }
    Ok(result)
}

/// Runs chains for several tasks on up to `jobs` threads. Results keep the
/// task order. After a fatal error no new chain is started.
pub fn run_chains<'t>(
    ctx: &ChainContext<'_>,
    tasks: &[&'t Task],
    store_for: impl Fn(&Task) -> Option<TaskStore> + Sync,
    jobs: usize,
) -> Vec<(&'t Task, Result<ChainResult, ChainError>)> {
    let next = AtomicUsize::new(0);
    let stop = std::sync::atomic::AtomicBool::new(false);
    let results: Mutex<Vec<Option<Result<ChainResult, ChainError>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            scope.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(task) = tasks.get(i) else { break };
                let store = store_for(task);
                let outcome = run_chain(ctx, task, store.as_ref());
                if outcome.as_ref().is_err_and(ChainError::is_fatal) {
                    stop.store(true, Ordering::SeqCst);
                }
                results.lock().expect("results lock")[i] = Some(outcome);
            });
        }
    });
    tasks
        .iter()
        .zip(results.into_inner().expect("results lock"))
        .filter_map(|(t, r)| r.map(|r| (*t, r)))
        .collect()
}

#[cfg(test)]
mod tests;
