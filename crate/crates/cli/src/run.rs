use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{anyhow, bail, Context, Result};
use serde::{Deserialize, Serialize};

use codechain_core::chain::{read_json, run_chains, write_json, ChainContext, RunManifest, TaskStore};
use codechain_core::eval::generate_synthetic_tests;
use codechain_core::exec::{Executor, TestReport};
use codechain_core::llm::TranscriptWriter;
use codechain_core::task::{load_dataset, SourceFormat, Split};
use codechain_core::{Task, TestCase};

use crate::config::{completion_provider, embedding_provider, shim_command, LoadedConfig};

pub const CONFIG_COPY: &str = "config.toml";
pub const TRANSCRIPT: &str = "transcript.jsonl";
pub const TASK_FILE: &str = "task.json";
pub const SYNTHETIC_FILE: &str = "synthetic.json";

/// Model-generated tests for one task and every round's outcomes on them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSuite {
    pub tests: Vec<TestCase>,
    /// Keyed by round index.
    pub reports: BTreeMap<usize, Vec<TestReport>>,
}

pub struct RunArgs<'a> {
    pub config: &'a Path,
    pub dataset: &'a Path,
    pub out: &'a Path,
    pub resume: bool,
    pub jobs: usize,
    pub split: Split,
    pub tasks: &'a [String],
}

fn is_empty_dir(path: &Path) -> Result<bool> {
    Ok(!path.exists() || fs::read_dir(path)?.next().is_none())
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn task_store(run_dir: &Path, task_id: &str) -> TaskStore {
    TaskStore::new(run_dir, task_id)
}

pub fn load_task(run_dir: &Path, task_id: &str) -> Result<Task> {
    let path = task_store(run_dir, task_id).dir().join(TASK_FILE);
    read_json(&path).with_context(|| format!("run directory has no snapshot of task {task_id}"))
}

pub fn cmd_run(args: &RunArgs<'_>) -> Result<()> {
    let loaded = LoadedConfig::load(args.config, true)?;
    let fingerprint = loaded.fingerprint()?;
    let (templates, one_shot) = loaded.templates()?;

    let (dataset, load_report) = load_dataset(args.dataset, SourceFormat::Generic, args.split)
        .with_context(|| format!("loading dataset {}", args.dataset.display()))?;
    if !load_report.skipped.is_empty() {
        log::warn!("{} task record(s) skipped while loading", load_report.skipped.len());
    }
    let tasks: Vec<&Task> = if args.tasks.is_empty() {
        dataset.tasks.iter().collect()
    } else {
        args.tasks
            .iter()
            .map(|id| dataset.task(id).ok_or_else(|| anyhow!("task {id} is not in the dataset")))
            .collect::<Result<_>>()?
    };
    if tasks.is_empty() {
        bail!("no tasks to run");
    }

    let out = args.out;
    if args.resume {
        let manifest = RunManifest::load(out).context("--resume needs an existing run directory")?;
        if manifest.config_fingerprint != fingerprint {
            bail!(
                "{} was started with a different configuration (fingerprint {}, now {})",
                out.display(),
                manifest.config_fingerprint,
                fingerprint
            );
        }
    } else if !is_empty_dir(out)? {
        bail!("{} is not empty; pass --resume to continue an interrupted run", out.display());
    }
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;

    let writer = Arc::new(TranscriptWriter::open(&out.join(TRANSCRIPT))?);
    let completer = completion_provider(&loaded, writer.clone())?;
    let embedder = embedding_provider(&loaded, writer)?;

    if !args.resume {
        fs::write(out.join(CONFIG_COPY), &loaded.text)?;
        let mut checksums = templates.checksums();
        checksums.push(("one_shot".into(), one_shot.checksum()));
        RunManifest {
            run_id: format!("run-{}", &fingerprint[..12]),
            config_fingerprint: fingerprint.clone(),
            dataset_name: dataset.name.clone(),
            split: dataset.split.as_str().to_string(),
            task_ids: tasks.iter().map(|t| t.id.clone()).collect(),
            completion_provider: completer.id(),
            embedding_provider: embedder.id(),
            template_checksums: checksums,
            created_at: now(),
            config_dir: fs::canonicalize(&loaded.base_dir).ok(),
        }
        .save(out)?;
    }
    for task in &tasks {
        write_json(&task_store(out, &task.id).dir().join(TASK_FILE), task)?;
    }

    let cfg = &loaded.config;
    let executor = Executor::new(Arc::new(shim_command(&loaded)?), cfg.sandbox.limits, args.jobs);
    let ctx = ChainContext {
        config: &cfg.run,
        templates: &templates,
        one_shot: &one_shot,
        completer: completer.as_ref(),
        embedder: embedder.as_ref(),
        executor: &executor,
        config_fingerprint: fingerprint,
        selection: cfg.selection()?,
    };
    let results = run_chains(&ctx, &tasks, |t| Some(task_store(out, &t.id)), args.jobs);

    let mut failures = Vec::new();
    for (task, result) in &results {
        match result {
            Ok(chain) => {
                let rates: Vec<String> = chain
                    .rounds
                    .iter()
                    .map(|r| r.metrics.public_pass_rate.map_or("-".into(), |p| format!("{p:.2}")))
                    .collect();
                println!(
                    "{}: {} round(s), best round {}, public pass rate per round [{}]",
                    task.id,
                    chain.rounds.len(),
                    chain.best_round,
                    rates.join(", ")
                );
            }
            Err(e) => {
                eprintln!("error: {e}");
                failures.push(task.id.clone());
            }
        }
    }
    let skipped = tasks.len() - results.len();
    if skipped > 0 {
        eprintln!("{skipped} task(s) not started after a fatal error");
    }
    if !failures.is_empty() || skipped > 0 {
        bail!("run incomplete; rerun with --resume to continue");
    }
    Ok(())
}

/// Loads the configuration a run was started with.
pub fn run_config(run_dir: &Path, strict: bool) -> Result<LoadedConfig> {
    let path = run_dir.join(CONFIG_COPY);
    if !path.exists() {
        bail!("{} is not a run directory (no {CONFIG_COPY})", run_dir.display());
    }
    let mut loaded = LoadedConfig::load(&path, strict)?;
    if let Some(dir) = RunManifest::load(run_dir).ok().and_then(|m| m.config_dir) {
        loaded.base_dir = dir;
    }
    Ok(loaded)
}

pub fn cmd_gen_tests(run_dir: &Path, config: Option<&Path>, jobs: usize) -> Result<()> {
    let loaded = match config {
        Some(p) => LoadedConfig::load(p, true)?,
        None => run_config(run_dir, true)?,
    };
    let manifest = RunManifest::load(run_dir)?;
    if manifest.config_fingerprint != loaded.fingerprint()? {
        bail!("config does not match the one {} was run with", run_dir.display());
    }
    let (templates, _) = loaded.templates()?;
    let writer = Arc::new(TranscriptWriter::open(&run_dir.join(TRANSCRIPT))?);
    let completer = completion_provider(&loaded, writer)?;
    let executor = Executor::new(Arc::new(shim_command(&loaded)?), loaded.config.sandbox.limits, jobs);
    let sampling = loaded.config.run.sampling();

    for id in &manifest.task_ids {
        let store = task_store(run_dir, id);
        let path: PathBuf = store.dir().join(SYNTHETIC_FILE);
        if path.exists() {
            println!("{id}: synthetic tests already present");
            continue;
        }
        let chain = store
            .load_chain()?
            .ok_or_else(|| anyhow!("task {id} has not finished; resume the run first"))?;
        let task = load_task(run_dir, id)?;
        let tests = generate_synthetic_tests(&task, &templates, completer.as_ref(), &sampling)
            .with_context(|| format!("generating tests for {id}"))?;
        let mut reports = BTreeMap::new();
        for round in &chain.rounds {
            let r = if tests.is_empty() {
                Vec::new()
            } else {
                executor.evaluate(&round.candidates, &tests, task.io_mode, task.fn_name.as_deref())
            };
            reports.insert(round.round_index, r);
        }
        println!("{id}: {} synthetic test(s)", tests.len());
        write_json(&path, &SyntheticSuite { tests, reports })?;
    }
    Ok(())
}

pub fn cmd_convert(format: SourceFormat, input: &Path, output: &Path, split: Split, name: Option<&str>) -> Result<()> {
    let (mut dataset, report) = load_dataset(input, format, split)?;
    if let Some(name) = name {
        dataset.name = name.to_string();
    }
    if !is_empty_dir(output)? {
        bail!("{} is not empty", output.display());
    }
    dataset.save(output)?;
    println!("converted {} task(s) into {}", report.loaded, output.display());
    for skipped in &report.skipped {
        println!("skipped {}: {}", skipped.source.display(), skipped.reason);
    }
    Ok(())
}
