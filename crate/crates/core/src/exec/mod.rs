//! Judging candidates against tests through the sandbox.

mod pool;
pub mod protocol;
mod supervisor;

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::extract::CandidateSolution;
use crate::task::{IoMode, TestCase};

pub use pool::{ExecJob, Executor};
pub use protocol::{ExecutionRecord, ExecutionRequest, RawVerdict, ResourceLimits, PROTOCOL_VERSION};
pub use supervisor::{Sandbox, ShimCommand, ShimRun};

const STDERR_EXCERPT_BYTES: usize = 2048;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExecError {
    #[error("cannot evaluate a candidate against an empty test list")]
    NoTests,
    #[error("candidate {0} has no extracted code")]
    Unparsed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    WrongAnswer,
    RuntimeError,
    Timeout,
    ResourceExceeded,
    InfraError,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::WrongAnswer => "wrong_answer",
            Verdict::RuntimeError => "runtime_error",
            Verdict::Timeout => "timeout",
            Verdict::ResourceExceeded => "resource_exceeded",
            Verdict::InfraError => "infra_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestOutcome {
    pub verdict: Verdict,
    /// Stdout, or the JSON return value for call-based tasks.
    pub actual_output: String,
    pub stderr_excerpt: String,
    pub elapsed_ms: u64,
}

impl TestOutcome {
    fn without_output(verdict: Verdict, stderr_excerpt: String, elapsed: Duration) -> Self {
        Self {
            verdict,
            actual_output: String::new(),
            stderr_excerpt,
            elapsed_ms: elapsed.as_millis() as u64,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestReport {
    pub sample_id: usize,
    pub per_test: Vec<TestOutcome>,
    pub all_passed: bool,
}

impl TestReport {
    pub fn new(sample_id: usize, per_test: Vec<TestOutcome>) -> Self {
        let all_passed = per_test.iter().all(TestOutcome::passed);
        Self {
            sample_id,
            per_test,
            all_passed,
        }
    }

    /// Report for a candidate that could not be run at all.
    pub fn unparsed(sample_id: usize, test_count: usize) -> Self {
        let outcome = TestOutcome::without_output(
            Verdict::RuntimeError,
            "no code extracted".into(),
            Duration::ZERO,
        );
        Self::new(sample_id, vec![outcome; test_count])
    }

    pub fn pass_count(&self) -> usize {
        self.per_test.iter().filter(|o| o.passed()).count()
    }
}

/// Per-line trailing whitespace trimmed, trailing blank lines dropped.
pub fn normalize_output(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.lines().map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

/// Compares an actual output with the expected one under the task's rules.
///
/// Call-based values compare as JSON. A return value `x` also matches an
/// expected `[x]`, since APPS stores every expected result wrapped in a
/// one-element list.
pub fn outputs_match(io_mode: IoMode, actual: &str, expected: &str) -> bool {
    match io_mode {
        IoMode::Stdio => normalize_output(actual) == normalize_output(expected),
        IoMode::CallBased => {
            match (
                serde_json::from_str::<Value>(actual),
                serde_json::from_str::<Value>(expected),
            ) {
                (Ok(a), Ok(e)) => {
                    a == e || matches!(&e, Value::Array(items) if items.len() == 1 && items[0] == a)
                }
                _ => normalize_output(actual) == normalize_output(expected),
            }
        }
    }
}

fn excerpt(text: &str) -> String {
    if text.len() <= STDERR_EXCERPT_BYTES {
        return text.to_string();
    }
    let mut start = text.len() - STDERR_EXCERPT_BYTES;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

fn truncate_to(text: &str, cap: u64) -> String {
    let cap = cap as usize;
    if text.len() <= cap {
        return text.to_string();
    }
    let mut end = cap;
    while !text.is_char_boundary(end) {
        end -= 1;
    }
    text[..end].to_string()
}

/// Turns what the supervisor saw into a verdict for `test`.
pub fn judge(run: &ShimRun, test: &TestCase, io_mode: IoMode, limits: &ResourceLimits) -> TestOutcome {
    if run.killed_at_deadline {
        return TestOutcome::without_output(Verdict::Timeout, "killed at wall deadline".into(), run.wall);
    }
    let record = match &run.record {
        Ok(r) => r,
        Err(msg) => return TestOutcome::without_output(Verdict::InfraError, msg.clone(), run.wall),
    };
    let elapsed = Duration::from_millis(record.elapsed_ms);
    let stderr = excerpt(&record.stderr_excerpt);
    match record.verdict_raw {
        RawVerdict::SelfTimeout => TestOutcome::without_output(Verdict::Timeout, stderr, elapsed),
        RawVerdict::OutputOverflow => {
            TestOutcome::without_output(Verdict::ResourceExceeded, stderr, elapsed)
        }
        RawVerdict::ProtocolError => TestOutcome::without_output(Verdict::InfraError, stderr, elapsed),
        RawVerdict::Exception => {
            let verdict = if stderr.contains("MemoryError") {
                Verdict::ResourceExceeded
            } else {
                Verdict::RuntimeError
            };
            TestOutcome {
                verdict,
                actual_output: truncate_to(&record.stdout, limits.output_cap_bytes),
                stderr_excerpt: stderr,
                elapsed_ms: record.elapsed_ms,
            }
        }
        RawVerdict::Completed => {
            let actual = match io_mode {
                IoMode::Stdio => truncate_to(&record.stdout, limits.output_cap_bytes),
                IoMode::CallBased => match &record.return_value_repr {
                    Some(v) => v.clone(),
                    None => {
                        return TestOutcome::without_output(
                            Verdict::InfraError,
                            "call-based result without a return value".into(),
                            elapsed,
                        )
                    }
                },
            };
            let verdict = if outputs_match(io_mode, &actual, &test.expected_output) {
                Verdict::Pass
            } else {
                Verdict::WrongAnswer
            };
            TestOutcome {
                verdict,
                actual_output: actual,
                stderr_excerpt: stderr,
                elapsed_ms: record.elapsed_ms,
            }
        }
    }
}

pub fn build_request(
    code: &str,
    test: &TestCase,
    io_mode: IoMode,
    fn_name: Option<&str>,
    limits: &ResourceLimits,
) -> ExecutionRequest {
    ExecutionRequest {
        version: PROTOCOL_VERSION,
        program_source: code.to_string(),
        io_mode,
        fn_name: fn_name.map(str::to_string),
        test_input: test.input.clone(),
        limits: *limits,
    }
}

/// Runs `code` on one test.
pub fn run_candidate(
    sandbox: &dyn Sandbox,
    code: &str,
    test: &TestCase,
    io_mode: IoMode,
    fn_name: Option<&str>,
    limits: &ResourceLimits,
) -> TestOutcome {
    let request = build_request(code, test, io_mode, fn_name, limits);
    if let Err(e) = request.validate() {
        return TestOutcome::without_output(Verdict::InfraError, e, Duration::ZERO);
    }
    judge(&sandbox.execute(&request), test, io_mode, limits)
}

/// Runs every test sequentially. With `short_circuit`, tests after the first
/// failure are skipped and reported with the failing verdict, which leaves
/// `all_passed` unchanged.
pub fn evaluate_candidate(
    sandbox: &dyn Sandbox,
    solution: &CandidateSolution,
    tests: &[TestCase],
    io_mode: IoMode,
    fn_name: Option<&str>,
    limits: &ResourceLimits,
    short_circuit: bool,
) -> Result<TestReport, ExecError> {
    if tests.is_empty() {
        return Err(ExecError::NoTests);
    }
    if !solution.is_parsed() {
        return Ok(TestReport::unparsed(solution.sample_id, tests.len()));
    }
    let mut per_test = Vec::with_capacity(tests.len());
    for test in tests {
        if short_circuit {
            if let Some(failed) = per_test.iter().find(|o: &&TestOutcome| !o.passed()) {
                let skipped = TestOutcome::without_output(failed.verdict, "skipped".into(), Duration::ZERO);
                per_test.push(skipped);
                continue;
            }
        }
        per_test.push(run_candidate(sandbox, &solution.code, test, io_mode, fn_name, limits));
    }
    Ok(TestReport::new(solution.sample_id, per_test))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicFilter {
    /// Sample ids that go on to feedback selection.
    pub kept: Vec<usize>,
    /// Nothing passed, or there were no public tests, so everything was kept.
    pub fallback: bool,
}

/// Keeps candidates whose public-test report is all-pass. When no candidate
/// passes, or there are no public tests, every candidate is kept and the
/// fallback flag is set.
pub fn filter_by_public_tests(
    candidates: &[CandidateSolution],
    reports: &[TestReport],
    have_public_tests: bool,
) -> PublicFilter {
    let all: Vec<usize> = candidates.iter().map(|c| c.sample_id).collect();
    if !have_public_tests {
        return PublicFilter {
            kept: all,
            fallback: true,
        };
    }
    let kept: Vec<usize> = candidates
        .iter()
        .filter(|c| {
            reports
                .iter()
                .any(|r| r.sample_id == c.sample_id && r.all_passed)
        })
        .map(|c| c.sample_id)
        .collect();
    if kept.is_empty() {
        PublicFilter {
            kept: all,
            fallback: true,
        }
    } else {
        PublicFilter {
            kept,
            fallback: false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::ParseStatus;

    fn run_of(verdict_raw: RawVerdict, stdout: &str, ret: Option<&str>, stderr: &str) -> ShimRun {
        ShimRun {
            record: Ok(ExecutionRecord {
                version: PROTOCOL_VERSION,
                verdict_raw,
                stdout: stdout.into(),
                return_value_repr: ret.map(str::to_string),
                stderr_excerpt: stderr.into(),
                elapsed_ms: 5,
            }),
            killed_at_deadline: false,
            wall: Duration::from_millis(6),
        }
    }

    fn limits() -> ResourceLimits {
        ResourceLimits::default()
    }

    #[test]
    fn normalization() {
        assert!(outputs_match(IoMode::Stdio, "6 \n", "6"));
        assert!(outputs_match(IoMode::Stdio, "1\n2\n\n\n", "1\n2"));
        assert!(outputs_match(IoMode::Stdio, "a\r\nb\r\n", "a\nb"));
        assert!(!outputs_match(IoMode::Stdio, "1 2", "1  2"));
        assert!(!outputs_match(IoMode::Stdio, "\n1", "1"));
        assert!(!outputs_match(IoMode::Stdio, "1.0", "1"));
    }

    #[test]
    fn call_based_comparison() {
        assert!(outputs_match(IoMode::CallBased, "5", "5"));
        assert!(outputs_match(IoMode::CallBased, "5", "[5]"));
        assert!(outputs_match(IoMode::CallBased, "[1, 2]", "[1,2]"));
        assert!(outputs_match(IoMode::CallBased, "[1, 2]", "[[1, 2]]"));
        assert!(!outputs_match(IoMode::CallBased, "[1, 2]", "[2, 1]"));
        assert!(!outputs_match(IoMode::CallBased, "\"5\"", "5"));
    }

    #[test]
    fn verdict_mapping() {
        let t = TestCase::new("7\n", "7");
        let io = IoMode::Stdio;
        assert_eq!(judge(&run_of(RawVerdict::Completed, "7\n", None, ""), &t, io, &limits()).verdict, Verdict::Pass);
        assert_eq!(judge(&run_of(RawVerdict::Completed, "6 \n", None, ""), &TestCase::new("", "6"), io, &limits()).verdict, Verdict::Pass);
        assert_eq!(judge(&run_of(RawVerdict::Completed, "8\n", None, ""), &t, io, &limits()).verdict, Verdict::WrongAnswer);
        assert_eq!(judge(&run_of(RawVerdict::Exception, "", None, "ZeroDivisionError"), &t, io, &limits()).verdict, Verdict::RuntimeError);
        assert_eq!(judge(&run_of(RawVerdict::Exception, "", None, "MemoryError"), &t, io, &limits()).verdict, Verdict::ResourceExceeded);
        assert_eq!(judge(&run_of(RawVerdict::SelfTimeout, "", None, ""), &t, io, &limits()).verdict, Verdict::Timeout);
        assert_eq!(judge(&run_of(RawVerdict::OutputOverflow, "", None, ""), &t, io, &limits()).verdict, Verdict::ResourceExceeded);
        assert_eq!(judge(&run_of(RawVerdict::ProtocolError, "", None, ""), &t, io, &limits()).verdict, Verdict::InfraError);
        let broken = ShimRun { record: Err("no document".into()), killed_at_deadline: false, wall: Duration::ZERO };
        assert_eq!(judge(&broken, &t, io, &limits()).verdict, Verdict::InfraError);
        let killed = ShimRun { record: Err(String::new()), killed_at_deadline: true, wall: Duration::from_secs(1) };
        assert_eq!(judge(&killed, &t, io, &limits()).verdict, Verdict::Timeout);
    }

    #[test]
    fn call_based_needs_return_value() {
        let t = TestCase::new("[2, 3]", "5");
        let io = IoMode::CallBased;
        assert_eq!(judge(&run_of(RawVerdict::Completed, "", Some("5"), ""), &t, io, &limits()).verdict, Verdict::Pass);
        assert_eq!(judge(&run_of(RawVerdict::Completed, "", None, ""), &t, io, &limits()).verdict, Verdict::InfraError);
    }

    fn candidate(id: usize) -> CandidateSolution {
        CandidateSolution {
            sample_id: id,
            task_id: "t".into(),
            round_index: 0,
            raw_text: String::new(),
            code: format!("print({id})"),
            submodules: vec![],
            parse_status: ParseStatus::Ok,
            diagnostic: None,
        }
    }

    fn report(id: usize, pass: bool) -> TestReport {
        let v = if pass { Verdict::Pass } else { Verdict::WrongAnswer };
        TestReport::new(id, vec![TestOutcome::without_output(v, String::new(), Duration::ZERO)])
    }

    #[test]
    fn public_filter() {
        let cands: Vec<_> = (0..20).map(candidate).collect();
        let passing = [1, 3, 4, 8, 11, 15, 19];
        let reports: Vec<_> = (0..20).map(|i| report(i, passing.contains(&i))).collect();
        let f = filter_by_public_tests(&cands, &reports, true);
        assert_eq!(f.kept, passing);
        assert!(!f.fallback);

        let none: Vec<_> = (0..20).map(|i| report(i, false)).collect();
        let f = filter_by_public_tests(&cands, &none, true);
        assert_eq!(f.kept.len(), 20);
        assert!(f.fallback);

        let f = filter_by_public_tests(&cands, &[], false);
        assert_eq!(f.kept.len(), 20);
        assert!(f.fallback);
    }

    struct Scripted(Vec<&'static str>);

    impl Sandbox for Scripted {
        fn execute(&self, request: &ExecutionRequest) -> ShimRun {
            let idx: usize = request.test_input.trim().parse().unwrap();
            run_of(RawVerdict::Completed, self.0[idx], None, "")
        }
        fn describe(&self) -> String {
            "scripted".into()
        }
    }

    #[test]
    fn evaluate_all_tests() {
        let tests = vec![TestCase::new("0", "a"), TestCase::new("1", "b"), TestCase::new("2", "c")];
        let ok = Scripted(vec!["a", "b", "c"]);
        let r = evaluate_candidate(&ok, &candidate(0), &tests, IoMode::Stdio, None, &limits(), false).unwrap();
        assert!(r.all_passed);

        let bad = Scripted(vec!["a", "x", "c"]);
        let r = evaluate_candidate(&bad, &candidate(0), &tests, IoMode::Stdio, None, &limits(), false).unwrap();
        assert!(!r.all_passed);
        assert_eq!(r.per_test[1].verdict, Verdict::WrongAnswer);
        assert_eq!(r.per_test[2].verdict, Verdict::Pass);

        let fast = evaluate_candidate(&bad, &candidate(0), &tests, IoMode::Stdio, None, &limits(), true).unwrap();
        assert_eq!(fast.all_passed, r.all_passed);

        assert_eq!(
            evaluate_candidate(&ok, &candidate(0), &[], IoMode::Stdio, None, &limits(), false),
            Err(ExecError::NoTests)
        );
    }
}
