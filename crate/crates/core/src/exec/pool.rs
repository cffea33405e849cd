use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use rayon::prelude::*;

use super::{build_request, judge, ResourceLimits, Sandbox, ShimRun, TestReport};
use crate::extract::CandidateSolution;
use crate::hashing::sha256_hex;
use crate::task::{IoMode, TestCase};

/// One (program, test) execution.
#[derive(Debug, Clone, Copy)]
pub struct ExecJob<'a> {
    pub code: &'a str,
    pub test: &'a TestCase,
}

/// Bounded worker pool in front of a sandbox, with a cache of raw
/// executions keyed by everything the sandbox sees.
pub struct Executor {
    sandbox: Arc<dyn Sandbox>,
    limits: ResourceLimits,
    pool: rayon::ThreadPool,
    cache: Mutex<HashMap<String, ShimRun>>,
}

impl Executor {
    pub fn new(sandbox: Arc<dyn Sandbox>, limits: ResourceLimits, jobs: usize) -> Self {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .thread_name(|i| format!("exec-{i}"))
            .build()
            .expect("building execution pool");
        Self {
            sandbox,
            limits,
            pool,
            cache: Mutex::new(HashMap::new()),
        }
    }

    pub fn limits(&self) -> &ResourceLimits {
        &self.limits
    }

    pub fn sandbox(&self) -> &dyn Sandbox {
        self.sandbox.as_ref()
    }

    fn key(&self, job: &ExecJob<'_>, io_mode: IoMode, fn_name: Option<&str>) -> String {
        let doc = serde_json::json!([
            job.code,
            job.test.input,
            io_mode,
            fn_name,
            self.limits,
        ]);
        sha256_hex(doc.to_string().as_bytes())
    }

    fn run_raw(&self, job: &ExecJob<'_>, io_mode: IoMode, fn_name: Option<&str>) -> ShimRun {
        let key = self.key(job, io_mode, fn_name);
        if let Some(hit) = self.cache.lock().expect("cache lock").get(&key) {
            return hit.clone();
        }
        let request = build_request(job.code, job.test, io_mode, fn_name, &self.limits);
        let run = match request.validate() {
            Ok(()) => self.sandbox.execute(&request),
            Err(e) => ShimRun {
                record: Err(e),
                killed_at_deadline: false,
                wall: Default::default(),
            },
        };
        // Infrastructure failures are worth retrying on a later call.
        if run.record.is_ok() || run.killed_at_deadline {
            self.cache.lock().expect("cache lock").insert(key, run.clone());
        }
        run
    }

    /// Runs independent jobs in the pool; results keep the input order.
    pub fn run_jobs(&self, jobs: &[ExecJob<'_>], io_mode: IoMode, fn_name: Option<&str>) -> Vec<super::TestOutcome> {
        self.pool.install(|| {
            jobs.par_iter()
                .map(|job| judge(&self.run_raw(job, io_mode, fn_name), job.test, io_mode, &self.limits))
                .collect()
        })
    }

    /// One report per candidate over every test; unparsed candidates fail
    /// every test without being run.
    pub fn evaluate(
        &self,
        candidates: &[CandidateSolution],
        tests: &[TestCase],
        io_mode: IoMode,
        fn_name: Option<&str>,
    ) -> Vec<TestReport> {
        let mut jobs = Vec::new();
        for c in candidates.iter().filter(|c| c.is_parsed()) {
            for test in tests {
                jobs.push(ExecJob { code: &c.code, test });
            }
        }
        let mut outcomes = self.run_jobs(&jobs, io_mode, fn_name).into_iter();
        candidates
            .iter()
            .map(|c| {
                if c.is_parsed() {
                    TestReport::new(c.sample_id, outcomes.by_ref().take(tests.len()).collect())
                } else {
                    TestReport::unparsed(c.sample_id, tests.len())
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use std::sync::atomic::{AtomicUsize, Ordering};
    use std::time::Duration;

    use super::*;
    use crate::exec::{ExecutionRecord, ExecutionRequest, RawVerdict, Verdict, PROTOCOL_VERSION};
    use crate::extract::ParseStatus;

    struct Counting(AtomicUsize);

    impl Sandbox for Counting {
        fn execute(&self, request: &ExecutionRequest) -> ShimRun {
            self.0.fetch_add(1, Ordering::SeqCst);
            let out = request.program_source.trim_start_matches("print(").trim_end_matches(')');
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
            "counting".into()
        }
    }

    fn cand(id: usize, code: &str, status: ParseStatus) -> CandidateSolution {
        CandidateSolution {
            sample_id: id,
            task_id: "t".into(),
            round_index: 0,
            raw_text: String::new(),
            code: code.into(),
            submodules: vec![],
            parse_status: status,
            diagnostic: None,
        }
    }

    #[test]
    fn caches_identical_programs() {
        let sandbox = Arc::new(Counting(AtomicUsize::new(0)));
        let exec = Executor::new(sandbox.clone(), ResourceLimits::default(), 4);
        let cands = vec![
            cand(0, "print(1)", ParseStatus::Ok),
            cand(1, "print(1)", ParseStatus::Ok),
            cand(2, "print(2)", ParseStatus::Ok),
            cand(3, "", ParseStatus::NoCodeBlock),
        ];
        let tests = vec![TestCase::new("a", "1"), TestCase::new("b", "1")];
        let reports = exec.evaluate(&cands, &tests, IoMode::Stdio, None);
        assert_eq!(reports.iter().map(|r| r.all_passed).collect::<Vec<_>>(), [true, true, false, false]);
        assert_eq!(reports[3].per_test[0].verdict, Verdict::RuntimeError);
        assert_eq!(sandbox.0.load(Ordering::SeqCst), 4);
        exec.evaluate(&cands, &tests, IoMode::Stdio, None);
        assert_eq!(sandbox.0.load(Ordering::SeqCst), 4);
    }
}
