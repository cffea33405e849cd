//! Spawns the sandbox shim, one child per execution.
//!
//! The child runs in its own process group under rlimits. The supervisor
//! kills the whole group when the wall budget runs out and again after the
//! shim exits, so nothing a candidate forks can outlive its execution.

use std::fs::File;
use std::io::{Read, Write};
use std::os::fd::{FromRawFd, OwnedFd};
use std::os::unix::process::CommandExt;
use std::path::PathBuf;
use std::process::{Command, Stdio};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

use super::protocol::{ExecutionRecord, ExecutionRequest, RESULT_FD};

/// What the supervisor observed for one execution.
#[derive(Debug, Clone)]
pub struct ShimRun {
    /// Parsed result document, or why none could be obtained.
    pub record: Result<ExecutionRecord, String>,
    /// The supervisor had to kill the child at the wall deadline.
    pub killed_at_deadline: bool,
    pub wall: Duration,
}

/// Executes one request in isolation.
pub trait Sandbox: Send + Sync {
    fn execute(&self, request: &ExecutionRequest) -> ShimRun;

    /// Identifies the sandbox in run metadata.
    fn describe(&self) -> String;
}

/// Runs an external shim command speaking the request/result protocol.
#[derive(Debug, Clone)]
pub struct ShimCommand {
    pub program: PathBuf,
    pub args: Vec<String>,
}

impl ShimCommand {
    pub fn new(program: impl Into<PathBuf>) -> Self {
        Self {
            program: program.into(),
            args: Vec::new(),
        }
    }

    pub fn with_args(mut self, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        self.args.extend(args.into_iter().map(Into::into));
        self
    }
}

fn cvt(ret: libc::c_int) -> std::io::Result<libc::c_int> {
    if ret == -1 {
        Err(std::io::Error::last_os_error())
    } else {
        Ok(ret)
    }
}

fn result_pipe() -> std::io::Result<(OwnedFd, OwnedFd)> {
    let mut fds = [0; 2];
    // SAFETY: fds is a valid two-element buffer.
    cvt(unsafe { libc::pipe2(fds.as_mut_ptr(), libc::O_CLOEXEC) })?;
    // SAFETY: pipe2 returned two fresh descriptors we now own.
    Ok(unsafe { (OwnedFd::from_raw_fd(fds[0]), OwnedFd::from_raw_fd(fds[1])) })
}

fn set_limit(resource: libc::__rlimit_resource_t, value: u64) -> std::io::Result<()> {
    let lim = libc::rlimit {
        rlim_cur: value as libc::rlim_t,
        rlim_max: value as libc::rlim_t,
    };
    // SAFETY: plain syscall on a stack value.
    cvt(unsafe { libc::setrlimit(resource, &lim) }).map(|_| ())
}

fn kill_group(pid: u32) {
    // SAFETY: signalling a process group we created; errors (already gone) are ignored.
    unsafe {
        libc::killpg(pid as libc::pid_t, libc::SIGKILL);
    }
}

/// Upper bound on a well-formed result document for the given request.
fn result_budget(request: &ExecutionRequest) -> u64 {
    // stdout is JSON-escaped (worst case \uXXXX per byte) plus a return value.
    request.limits.output_cap_bytes.saturating_mul(12) + (1 << 20)
}

impl Sandbox for ShimCommand {
    fn execute(&self, request: &ExecutionRequest) -> ShimRun {
        let start = Instant::now();
        let fail = |msg: String| ShimRun {
            record: Err(msg),
            killed_at_deadline: false,
            wall: start.elapsed(),
        };

        let payload = match serde_json::to_vec(request) {
            Ok(p) => p,
            Err(e) => return fail(format!("cannot encode request: {e}")),
        };
        let (read_end, write_end) = match result_pipe() {
            Ok(p) => p,
            Err(e) => return fail(format!("cannot create result pipe: {e}")),
        };

        let limits = request.limits;
        let cpu_secs = limits.wall_timeout_ms.div_ceil(1000) + 1;
        let write_raw = std::os::fd::AsRawFd::as_raw_fd(&write_end);
        let mut cmd = Command::new(&self.program);
        cmd.args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .env_clear()
            .env("PATH", std::env::var_os("PATH").unwrap_or_else(|| "/usr/bin:/bin".into()));
        // SAFETY: only async-signal-safe calls between fork and exec.
        unsafe {
            cmd.pre_exec(move || {
                cvt(libc::setpgid(0, 0))?;
                cvt(libc::dup2(write_raw, RESULT_FD))?;
                set_limit(libc::RLIMIT_AS, limits.memory_cap_bytes)?;
                set_limit(libc::RLIMIT_CPU, cpu_secs)?;
                set_limit(libc::RLIMIT_FSIZE, limits.output_cap_bytes)?;
                set_limit(libc::RLIMIT_CORE, 0)?;
                Ok(())
            });
        }

        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => return fail(format!("cannot spawn shim {}: {e}", self.program.display())),
        };
        drop(write_end);
        let pid = child.id();

        let mut stdin = child.stdin.take().expect("stdin is piped");
        let writer = thread::spawn(move || {
            // A child that dies early closes the pipe; that surfaces as a missing result.
            let _ = stdin.write_all(&payload);
        });
        let budget = result_budget(request);
        let reader = thread::spawn(move || {
            let mut buf = Vec::new();
            let mut file = File::from(read_end).take(budget + 1);
            let res = file.read_to_end(&mut buf);
            (buf, res)
        });

        let deadline = Duration::from_millis(limits.wall_timeout_ms);
        let mut killed = false;
        let status = match child.wait_timeout(deadline.saturating_sub(start.elapsed())) {
            Ok(Some(status)) => Some(status),
            Ok(None) => {
                killed = true;
                kill_group(pid);
                child.wait().ok()
            }
            Err(_) => {
                kill_group(pid);
                child.wait().ok()
            }
        };
        // Stragglers that escaped into the group but kept the pipe open.
        kill_group(pid);
        let wall = start.elapsed();
        let _ = writer.join();
        let (buf, read_res) = reader.join().unwrap_or_else(|_| (Vec::new(), Ok(0)));

        if killed {
            return ShimRun {
                record: Err("killed at wall deadline".into()),
                killed_at_deadline: true,
                wall,
            };
        }
        let record = match read_res {
            Err(e) => Err(format!("reading result document: {e}")),
            Ok(_) if buf.len() as u64 > budget => Err("result document exceeds size budget".into()),
            Ok(_) => ExecutionRecord::parse(&buf).map_err(|e| match status {
                Some(s) if !s.success() => format!("{e} (shim exit status {s})"),
                _ => e,
            }),
        };
        ShimRun {
            record,
            killed_at_deadline: false,
            wall,
        }
    }

    fn describe(&self) -> String {
        let mut parts = vec![self.program.display().to_string()];
        parts.extend(self.args.iter().cloned());
        parts.join(" ")
    }
}
