use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::*;
use crate::cluster::{HashedEmbedder, Scheme};
use crate::exec::{ExecutionRecord, ExecutionRequest, RawVerdict, ResourceLimits, Sandbox, ShimRun, PROTOCOL_VERSION};
use crate::llm::CompletionBatch;
use crate::task::{Difficulty, IoMode, TestCase};

/// Prints whatever follows `# emits:` in the program.
struct Emitter;

impl Sandbox for Emitter {
    fn execute(&self, request: &ExecutionRequest) -> ShimRun {
        let out = request
            .program_source
            .lines()
            .find_map(|l| l.strip_prefix("# emits: "))
            .unwrap_or("");
        ShimRun {
            record: Ok(ExecutionRecord {
                version: PROTOCOL_VERSION,
                verdict_raw: RawVerdict::Completed,
                stdout: format!("{out}\n"),
                return_value_repr: None,
                stderr_excerpt: String::new(),
                elapsed_ms: 1,
            }),
            killed_at_deadline: false,
            wall: Duration::from_millis(1),
        }
    }

    fn describe(&self) -> String {
        "emitter".into()
    }
}

type Script = dyn Fn(&RenderedPrompt, usize) -> Vec<String> + Send + Sync;

struct Scripted {
    script: Box<Script>,
    calls: AtomicUsize,
    prompts: Mutex<Vec<RenderedPrompt>>,
    fail_at_round: Option<usize>,
}

impl Scripted {
    fn new(script: impl Fn(&RenderedPrompt, usize) -> Vec<String> + Send + Sync + 'static) -> Self {
        Self {
            script: Box::new(script),
            calls: AtomicUsize::new(0),
            prompts: Mutex::new(Vec::new()),
            fail_at_round: None,
        }
    }
}

impl CompletionProvider for Scripted {
    fn id(&self) -> String {
        "scripted".into()
    }

    fn complete(&self, prompt: &RenderedPrompt, params: &SamplingParams) -> Result<CompletionBatch, LlmError> {
        if self.fail_at_round == Some(prompt.round_index) {
            return Err(LlmError::TranscriptIncomplete {
                fingerprint: prompt.fingerprint(),
                task_id: prompt.task_id.clone(),
                round_index: prompt.round_index,
            });
        }
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.prompts.lock().unwrap().push(prompt.clone());
        Ok(CompletionBatch {
            prompt_fingerprint: prompt.fingerprint(),
            texts: (self.script)(prompt, params.n),
            provider_id: self.id(),
            latency_ms: 7,
            retries: 0,
            shortfall: 0,
        })
    }
}

fn program(i: usize, round: usize, emits: &str) -> String {
    format!(
        "Plan first.\n```python\ndef parse_{i}_{round}(line):\n    \"\"\"Split a line into ints.\"\"\"\n    return [int(x) for x in line.split()]\n\n\ndef solve_{i}_{round}(values):\n    total = 0\n    for v in values:\n        total += v * {i}\n    return total\n\n\nprint(solve_{i}_{round}(parse_{i}_{round}(input())))\n# emits: {emits}\n```\n"
    )
}

/// Candidates whose id is in `good` pass the public test.
fn mixed(good: &'static [usize]) -> impl Fn(&RenderedPrompt, usize) -> Vec<String> + Send + Sync {
    move |p, n| {
        (0..n)
            .map(|i| program(i, p.round_index, if good.contains(&i) { "OK" } else { "NO" }))
            .collect()
    }
}

fn task() -> Task {
    Task {
        id: "t1".into(),
        description: "Print OK.".into(),
        difficulty: Difficulty::Interview,
        io_mode: IoMode::Stdio,
        fn_name: None,
        public_tests: vec![TestCase::new("", "OK")],
        private_tests: vec![TestCase::new("1", "OK"), TestCase::new("2", "OK")],
    }
}

struct Fixture {
    config: RunConfig,
    templates: TemplateSet,
    one_shot: OneShot,
    embedder: HashedEmbedder,
    executor: Executor,
}

impl Fixture {
    fn new(max_rounds: usize, n: usize) -> Self {
        Self {
            config: RunConfig {
                samples_per_round: n,
                max_rounds,
                schedule: ClusterSchedule { scheme: Scheme::Fixed, base_k: 3 },
                ..RunConfig::default()
            },
            templates: TemplateSet::builtin(),
            one_shot: OneShot::builtin(),
            embedder: HashedEmbedder::default(),
            executor: Executor::new(Arc::new(Emitter), ResourceLimits::default(), 2),
        }
    }

    fn ctx<'a>(&'a self, completer: &'a dyn CompletionProvider) -> ChainContext<'a> {
        ChainContext {
            config: &self.config,
            templates: &self.templates,
            one_shot: &self.one_shot,
            completer,
            embedder: &self.embedder,
            executor: &self.executor,
            config_fingerprint: config_fingerprint(&self.config, &self.templates, &self.one_shot),
            selection: RoundSelection::PublicProxy,
        }
    }
}

#[test]
fn zero_rounds_is_direct_generation_only() {
    let fx = Fixture::new(0, 4);
    let provider = Scripted::new(mixed(&[0]));
    let chain = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    assert_eq!(chain.rounds.len(), 1);
    assert_eq!(chain.best_round, 0);
    assert!(chain.rounds[0].selected_feedback.is_empty());
    assert_eq!(chain.rounds[0].prompts[0].template_name, crate::prompt::TemplateName::Cot);
    assert_eq!(provider.calls.load(Ordering::SeqCst), 1);
}

#[test]
fn feedback_comes_only_from_public_passers() {
    const GOOD: &[usize] = &[1, 4, 6, 9, 12, 15, 19];
    let fx = Fixture::new(2, 20);
    let provider = Scripted::new(mixed(GOOD));
    let chain = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    assert_eq!(chain.rounds.len(), 3);
    assert_eq!(chain.rounds[0].filtered_ids, GOOD);
    assert!(!chain.rounds[0].filter_fallback);
    for r in 1..=2 {
        let round = &chain.rounds[r];
        assert!(!round.selected_feedback.is_empty());
        assert!(round.selected_feedback.len() <= 3);
        let prompt = &round.prompts[0].text;
        for item in &round.selected_feedback {
            assert!(GOOD.contains(&item.source_sample_id()));
            assert_eq!(item.round_index(), r - 1);
            assert!(prompt.contains(&item.text()), "round {r} prompt misses {}", item.text());
        }
    }
    // Budget: N completions per executed round.
    assert_eq!(chain.completions_requested(), 60);
    assert_eq!(provider.calls.load(Ordering::SeqCst), 3);
    let m = &chain.rounds[0].metrics;
    assert_eq!(m.public_pass_rate, Some(7.0 / 20.0));
    assert_eq!(m.private_correct, 7);
}

#[test]
fn without_public_filter_every_candidate_feeds_back() {
    let mut fx = Fixture::new(1, 6);
    fx.config.use_public_filter = false;
    let provider = Scripted::new(mixed(&[0]));
    let chain = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    assert_eq!(chain.rounds[1].feedback_pool, [0, 1, 2, 3, 4, 5]);
}

#[test]
fn whole_program_feedback() {
    let mut fx = Fixture::new(1, 6);
    fx.config.revision_feedback = FeedbackMode::CentroidPrograms;
    let provider = Scripted::new(mixed(&[0, 1, 2, 3]));
    let chain = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    let round = &chain.rounds[1];
    let assignment = round.cluster_assignment.as_ref().unwrap();
    assert_eq!(assignment.labels.len(), 4);
    for item in &round.selected_feedback {
        let FeedbackItem::Program { code, sample_id, .. } = item else {
            panic!("expected whole programs");
        };
        assert_eq!(code, &chain.rounds[0].candidates[*sample_id].code);
        assert!(round.prompts[0].text.contains(code.trim_end()));
    }
}

#[test]
fn random_modes_draw_the_scheduled_count() {
    let mut fx = Fixture::new(1, 5);
    fx.config.revision_feedback = FeedbackMode::RandomSubmodules;
    let provider = Scripted::new(mixed(&[0, 1, 2, 3, 4]));
    let a = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    let b = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    let round = &a.rounds[1];
    assert!(round.cluster_assignment.is_none());
    assert_eq!(round.cluster_k, Some(3));
    assert_eq!(round.selected_feedback.len(), 3);
    let mut keys: Vec<_> = round.selected_feedback.iter().map(FeedbackItem::order_key).collect();
    keys.dedup();
    assert_eq!(keys.len(), 3);
    assert_eq!(a.fingerprint(), b.fingerprint());

    fx.config.seed = 99;
    let c = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    assert_eq!(c.rounds[1].selected_feedback.len(), 3);
}

#[test]
fn degenerate_rounds_reuse_feedback() {
    let fx = Fixture::new(3, 4);
    // Round 1 answers with prose only.
    let provider = Scripted::new(|p, n| {
        (0..n)
            .map(|i| {
                if p.round_index == 1 {
                    "I am not sure how to solve this.".to_string()
                } else {
                    program(i, p.round_index, "OK")
                }
            })
            .collect()
    });
    let chain = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    assert!(chain.rounds[1].degenerate);
    assert_eq!(chain.rounds[1].metrics.parsed, 0);
    let r2 = &chain.rounds[2];
    assert!(r2.feedback_reused);
    assert_eq!(r2.selected_feedback, chain.rounds[1].selected_feedback);
    assert!(!chain.rounds[3].feedback_reused);
    assert_eq!(chain.completions_requested(), 16);
}

#[test]
fn no_code_at_round_zero_falls_back_to_direct_prompt() {
    let fx = Fixture::new(1, 3);
    let provider = Scripted::new(|p, n| {
        (0..n)
            .map(|i| if p.round_index == 0 { "No idea.".into() } else { program(i, 1, "OK") })
            .collect()
    });
    let chain = run_chain(&fx.ctx(&provider), &task(), None).unwrap();
    let r1 = &chain.rounds[1];
    assert!(r1.selected_feedback.is_empty());
    assert_eq!(r1.prompts[0].template_name, crate::prompt::TemplateName::Cot);
    assert_eq!(r1.prompts[0].round_index, 1);
    assert_eq!(r1.metrics.parsed, 3);
}

#[test]
fn resume_continues_after_a_fatal_error() {
    let fx = Fixture::new(2, 5);
    let reference = run_chain(&fx.ctx(&Scripted::new(mixed(&[0, 2]))), &task(), None).unwrap();

    let dir = tempfile::tempdir().unwrap();
    let store = TaskStore::new(dir.path(), "t1");
    let mut failing = Scripted::new(mixed(&[0, 2]));
    failing.fail_at_round = Some(2);
    let err = run_chain(&fx.ctx(&failing), &task(), Some(&store)).unwrap_err();
    assert!(err.is_fatal());
    assert!(err.to_string().contains("transcript incomplete"));
    assert_eq!(store.load_rounds().unwrap().len(), 2);
    assert!(store.load_chain().unwrap().is_none());

    let resumed_provider = Scripted::new(mixed(&[0, 2]));
    let resumed = run_chain(&fx.ctx(&resumed_provider), &task(), Some(&store)).unwrap();
    assert_eq!(resumed_provider.calls.load(Ordering::SeqCst), 1);
    assert_eq!(resumed.fingerprint(), reference.fingerprint());
    assert_eq!(store.load_chain().unwrap().unwrap(), resumed);

    // A complete store is left alone.
    let idle = Scripted::new(mixed(&[0, 2]));
    let again = run_chain(&fx.ctx(&idle), &task(), Some(&store)).unwrap();
    assert_eq!(idle.calls.load(Ordering::SeqCst), 0);
    assert_eq!(again, resumed);
}

#[test]
fn fingerprint_ignores_timing() {
    let fx = Fixture::new(1, 3);
    let chain = run_chain(&fx.ctx(&Scripted::new(mixed(&[1]))), &task(), None).unwrap();
    let mut slower = chain.clone();
    slower.rounds[0].latency_ms += 1000;
    slower.rounds[1].public_reports[0].per_test[0].elapsed_ms += 5;
    assert_eq!(chain.fingerprint(), slower.fingerprint());
    slower.best_round = 0;
    slower.rounds[1].candidates[0].raw_text.push('x');
    assert_ne!(chain.fingerprint(), slower.fingerprint());
}

#[test]
fn many_tasks_keep_order() {
    let fx = Fixture::new(1, 3);
    let provider = Scripted::new(mixed(&[0]));
    let tasks: Vec<Task> = (0..4)
        .map(|i| Task {
            id: format!("t{i}"),
            ..task()
        })
        .collect();
    let refs: Vec<&Task> = tasks.iter().collect();
    let results = run_chains(&fx.ctx(&provider), &refs, |_| None, 3);
    let ids: Vec<&str> = results.iter().map(|(t, _)| t.id.as_str()).collect();
    assert_eq!(ids, ["t0", "t1", "t2", "t3"]);
    assert!(results.iter().all(|(_, r)| r.is_ok()));
    assert_eq!(provider.calls.load(Ordering::SeqCst), 8);
}

fn rounds_with_rates(rates: &[Option<f64>]) -> Vec<RoundRecord> {
    let fx = Fixture::new(0, 1);
    let base = run_chain(&fx.ctx(&Scripted::new(mixed(&[0]))), &task(), None).unwrap().rounds[0].clone();
    rates
        .iter()
        .enumerate()
        .map(|(i, rate)| {
            let mut r = base.clone();
            r.round_index = i;
            r.metrics.public_pass_rate = *rate;
            r
        })
        .collect()
}

#[test]
fn best_round_rules() {
    let rounds = rounds_with_rates(&[Some(0.2), Some(0.3), Some(0.5), Some(0.5)]);
    assert_eq!(select_best_round(&rounds, RoundSelection::PublicProxy), 2);
    assert_eq!(select_best_round(&rounds[..1], RoundSelection::PublicProxy), 0);
    let six = rounds_with_rates(&[Some(0.0); 6]);
    assert_eq!(select_best_round(&six, RoundSelection::FixedRound { round: 4 }), 4);
    assert_eq!(select_best_round(&six, RoundSelection::FixedRound { round: 9 }), 5);
    let blind = rounds_with_rates(&[None, None, None]);
    assert_eq!(select_best_round(&blind, RoundSelection::PublicProxy), 2);
}

#[test]
fn selection_parses() {
    assert_eq!("public_proxy".parse::<RoundSelection>().unwrap(), RoundSelection::PublicProxy);
    assert_eq!("fixed_round=4".parse::<RoundSelection>().unwrap(), RoundSelection::FixedRound { round: 4 });
    assert_eq!("3".parse::<RoundSelection>().unwrap(), RoundSelection::FixedRound { round: 3 });
    assert!("best".parse::<RoundSelection>().is_err());
}

#[test]
fn config_round_trips_with_short_mode_names() {
    let cfg: RunConfig = serde_json::from_str(r#"{"revision_feedback": "R-P", "max_rounds": 2}"#).unwrap();
    assert_eq!(cfg.revision_feedback, FeedbackMode::RandomPrograms);
    assert_eq!(cfg.samples_per_round, 20);
    assert!(RunConfig { samples_per_round: 0, ..cfg.clone() }.validate().is_err());
    let t = TemplateSet::builtin();
    let o = OneShot::builtin();
    let other = RunConfig { seed: 1, ..cfg.clone() };
    assert_ne!(config_fingerprint(&cfg, &t, &o), config_fingerprint(&other, &t, &o));
}
