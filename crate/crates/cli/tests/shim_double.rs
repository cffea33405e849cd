//! The shim test double driven through the real supervisor.

use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use codechain_core::exec::{
    run_candidate, ExecutionRequest, RawVerdict, ResourceLimits, Sandbox, ShimCommand, Verdict,
    PROTOCOL_VERSION,
};
use codechain_core::task::{IoMode, TestCase};

fn shim() -> ShimCommand {
    ShimCommand::new(env!("CARGO_BIN_EXE_codechain-shim-double"))
}

fn limits(wall_ms: u64) -> ResourceLimits {
    ResourceLimits {
        wall_timeout_ms: wall_ms,
        ..ResourceLimits::default()
    }
}

fn adversarial(name: &str) -> String {
    let path: PathBuf = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures/adversarial")
        .join(name);
    std::fs::read_to_string(path).unwrap()
}

fn stdio(code: &str, input: &str, expected: &str, wall_ms: u64) -> codechain_core::exec::TestOutcome {
    run_candidate(&shim(), code, &TestCase::new(input, expected), IoMode::Stdio, None, &limits(wall_ms))
}

#[test]
fn echo_stdin() {
    let out = stdio("print(input())", "hi", "hi", 5000);
    assert_eq!(out.verdict, Verdict::Pass, "{out:?}");
    assert_eq!(out.actual_output, "hi\n");
    assert_eq!(stdio("print(input())", "7\n", "7", 5000).verdict, Verdict::Pass);
}

#[test]
fn trailing_whitespace_is_ignored() {
    assert_eq!(stdio("print('6 ')", "", "6", 5000).verdict, Verdict::Pass);
    assert_eq!(stdio("print(5)", "", "6", 5000).verdict, Verdict::WrongAnswer);
}

#[test]
fn reading_stdin_via_fd_zero_is_allowed() {
    let code = "n = sum(map(int, open(0).read().split()))\nprint(n)";
    assert_eq!(stdio(code, "1 2 3\n", "6", 5000).verdict, Verdict::Pass);
}

#[test]
fn call_based_invocation() {
    let code = "def add(a, b):\n    return a + b\n";
    let out = run_candidate(&shim(), code, &TestCase::new("[2, 3]", "5"), IoMode::CallBased, Some("add"), &limits(5000));
    assert_eq!(out.verdict, Verdict::Pass, "{out:?}");
    assert_eq!(out.actual_output, "5");

    let method = "class Solution:\n    def pair(self, a):\n        return [a, a]\n";
    let out = run_candidate(&shim(), method, &TestCase::new("[4]", "[[4, 4]]"), IoMode::CallBased, Some("pair"), &limits(5000));
    assert_eq!(out.verdict, Verdict::Pass, "{out:?}");

    let missing = run_candidate(&shim(), "x = 1", &TestCase::new("[]", "1"), IoMode::CallBased, Some("f"), &limits(5000));
    assert_eq!(missing.verdict, Verdict::RuntimeError);
}

#[test]
fn exceptions_are_runtime_errors() {
    let out = stdio("print(1 // 0)", "", "", 5000);
    assert_eq!(out.verdict, Verdict::RuntimeError);
    assert!(out.stderr_excerpt.contains("ZeroDivisionError"), "{out:?}");
    assert_eq!(stdio("import sys\nprint(3)\nsys.exit(0)", "", "3", 5000).verdict, Verdict::Pass);
    assert_eq!(stdio("import sys\nsys.exit(2)", "", "", 5000).verdict, Verdict::RuntimeError);
    assert_eq!(stdio("def f(:\n  pass", "", "", 5000).verdict, Verdict::RuntimeError);
}

#[test]
fn malformed_request_yields_protocol_error_document() {
    let req = ExecutionRequest {
        version: 99,
        program_source: "print(1)".into(),
        io_mode: IoMode::Stdio,
        fn_name: None,
        test_input: String::new(),
        limits: limits(5000),
    };
    let run = shim().execute(&req);
    assert_eq!(run.record.unwrap().verdict_raw, RawVerdict::ProtocolError);
}

#[test]
fn adversarial_programs_get_controlled_verdicts() {
    let sentinel = tempfile::NamedTempFile::new().unwrap();
    std::fs::write(sentinel.path(), "harness state").unwrap();
    let cases = [
        ("infinite_loop.py", &[Verdict::Timeout][..]),
        ("fork_storm.py", &[Verdict::RuntimeError, Verdict::ResourceExceeded, Verdict::Timeout][..]),
        ("stdout_flood.py", &[Verdict::ResourceExceeded][..]),
        ("deep_recursion.py", &[Verdict::RuntimeError, Verdict::ResourceExceeded][..]),
        ("file_probe.py", &[Verdict::RuntimeError][..]),
        ("socket_probe.py", &[Verdict::RuntimeError][..]),
        ("memory_hog.py", &[Verdict::ResourceExceeded, Verdict::RuntimeError][..]),
    ];
    for (name, allowed) in cases {
        let wall = 2000;
        let start = Instant::now();
        let out = stdio(&adversarial(name), "", "", wall);
        let took = start.elapsed();
        assert!(allowed.contains(&out.verdict), "{name}: {out:?}");
        assert!(took <= Duration::from_millis(wall + 500), "{name} took {took:?}");
    }
    assert_eq!(std::fs::read_to_string(sentinel.path()).unwrap(), "harness state");
    assert_eq!(stdio("print(input())", "ok", "ok", 5000).verdict, Verdict::Pass);
}

#[test]
fn one_result_document_per_request() {
    for name in ["infinite_loop.py", "stdout_flood.py", "deep_recursion.py", "fork_storm.py"] {
        let req = ExecutionRequest {
            version: PROTOCOL_VERSION,
            program_source: adversarial(name),
            io_mode: IoMode::Stdio,
            fn_name: None,
            test_input: String::new(),
            limits: limits(2000),
        };
        let run = shim().execute(&req);
        assert!(run.record.is_ok(), "{name}: {:?}", run.record);
        assert!(!run.killed_at_deadline, "{name}");
    }
}
