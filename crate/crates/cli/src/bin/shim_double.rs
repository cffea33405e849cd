//! Stand-in for the sandbox shim.
//!
//! Reads one execution request from stdin, runs the candidate under
//! `python3 -I` with a guard prelude, and writes exactly one result document
//! to descriptor 3. The interpreter gets its own status pipe on its fd 3, so
//! candidate code never sees the supervisor's channel.

use std::fs::{self, File};
use std::io::{Read, Write};
use std::os::fd::{AsRawFd, FromRawFd, OwnedFd};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::process::{Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use codechain_core::exec::protocol::{
    ExecutionRecord, ExecutionRequest, RawVerdict, PROTOCOL_VERSION, RESULT_FD,
};
use codechain_core::task::IoMode;
use serde::Deserialize;

const WRAPPER: &str = r#"
import sys, os, json
status_fd = os.dup(3)
os.close(3)
_write, _close, _dumps = os.write, os.close, json.dumps

def _report(doc):
    try:
        sys.stdout.flush()
    except BaseException:
        pass
    data = _dumps(doc).encode()
    while data:
        n = _write(status_fd, data)
        data = data[n:]
    _close(status_fd)

path, mode, fn_name = sys.argv[1], sys.argv[2], sys.argv[3]
with open(path, encoding="utf-8") as fh:
    source = fh.read()
args = json.loads(sys.stdin.read()) if mode == "call_based" else None

import builtins, io, posix, traceback
def _denied(*a, **k):
    raise PermissionError("operation not permitted in sandbox")
_real_open = builtins.open
def _guarded_open(file, *a, **k):
    if file in (0, "/dev/stdin"):
        return _real_open(file, *a, **k)
    raise PermissionError("file access not permitted in sandbox")
for mod in (os, posix):
    for name in ("fork", "forkpty", "vfork", "system", "popen", "execv", "execve", "execvp",
                 "execvpe", "execl", "execle", "execlp", "execlpe", "spawnv", "spawnve",
                 "spawnvp", "spawnvpe", "posix_spawn", "posix_spawnp", "kill", "killpg",
                 "remove", "unlink", "rmdir", "removedirs", "rename", "renames", "replace",
                 "truncate", "chmod", "chown", "chdir", "chroot", "putenv", "unsetenv",
                 "open", "openpty", "mkdir", "makedirs", "symlink", "link", "listdir",
                 "scandir", "setuid", "setgid", "dup2", "register_at_fork"):
        if hasattr(mod, name):
            setattr(mod, name, _denied)
builtins.open = _guarded_open
io.open = _guarded_open
for name in ("subprocess", "socket", "_socket", "multiprocessing", "shutil", "ctypes", "pty"):
    stub = type(sys)(name)
    stub.__getattr__ = lambda attr: _denied
    sys.modules[name] = stub
sys.setrecursionlimit(10000)

try:
    code = compile(source, "<candidate>", "exec")
    env = {"__name__": "__main__" if mode == "stdio" else "candidate", "__builtins__": builtins}
    try:
        exec(code, env)
    except SystemExit as e:
        if e.code not in (None, 0):
            raise
    if mode == "call_based":
        target = env.get(fn_name)
        if not callable(target) and isinstance(env.get("Solution"), type):
            target = getattr(env["Solution"](), fn_name, None)
        if not callable(target):
            raise NameError("function %r is not defined" % fn_name)
        if not isinstance(args, list):
            args = [args]
        result = target(*args)
        try:
            rendered = _dumps(result, sort_keys=True)
        except (TypeError, ValueError):
            rendered = _dumps(repr(result))
        _report({"kind": "completed", "return_value": rendered})
    else:
        _report({"kind": "completed"})
except BaseException as e:
    tb = traceback.format_exc(limit=5)
    sys.stderr.write(tb)
    _report({"kind": "exception", "error": type(e).__name__, "traceback": tb[-2000:]})
"#;

#[derive(Deserialize)]
struct Status {
    kind: String,
    #[serde(default)]
    return_value: Option<String>,
    #[serde(default)]
    error: Option<String>,
}

struct Shim {
    start: Instant,
}

impl Shim {
    fn record(&self, verdict_raw: RawVerdict, stdout: String, ret: Option<String>, stderr: String) -> ExecutionRecord {
        ExecutionRecord {
            version: PROTOCOL_VERSION,
            verdict_raw,
            stdout,
            return_value_repr: ret,
            stderr_excerpt: tail(&stderr, 2000),
            elapsed_ms: self.start.elapsed().as_millis() as u64,
        }
    }
}

fn tail(text: &str, max: usize) -> String {
    if text.len() <= max {
        return text.to_string();
    }
    let mut start = text.len() - max;
    while !text.is_char_boundary(start) {
        start += 1;
    }
    text[start..].to_string()
}

fn emit(record: &ExecutionRecord) {
    // SAFETY: descriptor 3 is the result channel set up by the supervisor.
    let mut out = unsafe { File::from_raw_fd(RESULT_FD) };
    let bytes = serde_json::to_vec(record).expect("record serializes");
    let _ = out.write_all(&bytes);
}

fn status_pipe() -> std::io::Result<(OwnedFd, OwnedFd)> {
    let mut fds = [0; 2];
    // SAFETY: valid buffer for two descriptors.
    if unsafe { libc::pipe2(fds.as_mut_ptr(), libc::O_CLOEXEC) } == -1 {
        return Err(std::io::Error::last_os_error());
    }
    // SAFETY: freshly created descriptors.
    Ok(unsafe { (OwnedFd::from_raw_fd(fds[0]), OwnedFd::from_raw_fd(fds[1])) })
}

fn read_capped<R: Read + Send + 'static>(
    mut src: R,
    cap: u64,
    overflow: Option<(Arc<AtomicBool>, u32)>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 65536];
        loop {
            let n = match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => n,
            };
            let room = (cap as usize).saturating_sub(kept.len());
            kept.extend_from_slice(&buf[..n.min(room)]);
            if n > room {
                if let Some((flag, pid)) = &overflow {
                    flag.store(true, Ordering::SeqCst);
                    // SAFETY: signalling our own child.
                    unsafe { libc::kill(*pid as libc::pid_t, libc::SIGKILL) };
                    break;
                }
            }
        }
        kept
    })
}

fn describe_exit(status: ExitStatus) -> String {
    match status.signal() {
        Some(sig) => format!("interpreter killed by signal {sig}"),
        None => format!("interpreter exited with {status}"),
    }
}

fn run(shim: &Shim, req: &ExecutionRequest) -> Result<ExecutionRecord, String> {
    let workdir = std::env::temp_dir().join(format!("codechain-shim-{}", std::process::id()));
    fs::create_dir_all(&workdir).map_err(|e| e.to_string())?;
    let result = run_in(shim, req, &workdir);
    let _ = fs::remove_dir_all(&workdir);
    result
}

fn run_in(shim: &Shim, req: &ExecutionRequest, workdir: &std::path::Path) -> Result<ExecutionRecord, String> {
    let prog = workdir.join("candidate.py");
    fs::write(&prog, &req.program_source).map_err(|e| e.to_string())?;
    let (status_r, status_w) = status_pipe().map_err(|e| e.to_string())?;
    let status_w_raw = status_w.as_raw_fd();
    let mode = match req.io_mode {
        IoMode::Stdio => "stdio",
        IoMode::CallBased => "call_based",
    };
    let python = std::env::var("CODECHAIN_PYTHON").unwrap_or_else(|_| "python3".into());
    let mut cmd = Command::new(python);
    cmd.arg("-I")
        .arg("-c")
        .arg(WRAPPER)
        .arg(&prog)
        .arg(mode)
        .arg(req.fn_name.as_deref().unwrap_or(""))
        .current_dir(workdir)
        .env_clear()
        .env("PATH", "/usr/bin:/bin")
        .env("PYTHONHASHSEED", "0")
        .env("PYTHONIOENCODING", "utf-8")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    let mem = req.limits.memory_cap_bytes;
    // SAFETY: async-signal-safe calls only.
    unsafe {
        cmd.pre_exec(move || {
            if libc::dup2(status_w_raw, RESULT_FD) == -1 {
                return Err(std::io::Error::last_os_error());
            }
            let lim = libc::rlimit { rlim_cur: mem as libc::rlim_t, rlim_max: mem as libc::rlim_t };
            libc::setrlimit(libc::RLIMIT_AS, &lim);
            Ok(())
        });
    }
    let mut child = cmd.spawn().map_err(|e| format!("cannot start interpreter: {e}"))?;
    drop(status_w);
    let pid = child.id();

    let mut stdin = child.stdin.take().expect("piped");
    let input = req.test_input.clone().into_bytes();
    let feeder = thread::spawn(move || {
        let _ = stdin.write_all(&input);
    });
    let overflow = Arc::new(AtomicBool::new(false));
    let cap = req.limits.output_cap_bytes;
    let out = read_capped(child.stdout.take().expect("piped"), cap, Some((overflow.clone(), pid)));
    let err = read_capped(child.stderr.take().expect("piped"), 64 * 1024, None);
    let status_reader = read_capped(File::from(status_r), 16 << 20, None);

    // Leave the supervisor headroom to observe our own verdict.
    let wall = req.limits.wall_timeout_ms;
    let budget = Duration::from_millis(wall.saturating_sub((wall / 10).clamp(50, 300)));
    let mut timed_out = false;
    let exit = loop {
        if let Some(status) = child.try_wait().map_err(|e| e.to_string())? {
            break status;
        }
        if shim.start.elapsed() >= budget {
            timed_out = true;
            let _ = child.kill();
            break child.wait().map_err(|e| e.to_string())?;
        }
        thread::sleep(Duration::from_millis(2));
    };
    let _ = feeder.join();
    let stdout = out.join().unwrap_or_default();
    let stderr = String::from_utf8_lossy(&err.join().unwrap_or_default()).into_owned();
    let status_bytes = status_reader.join().unwrap_or_default();
    let stdout = String::from_utf8_lossy(&stdout).into_owned();

    if overflow.load(Ordering::SeqCst) {
        return Ok(shim.record(RawVerdict::OutputOverflow, stdout, None, "output cap exceeded".into()));
    }
    if timed_out {
        return Ok(shim.record(RawVerdict::SelfTimeout, stdout, None, stderr));
    }
    match serde_json::from_slice::<Status>(&status_bytes) {
        Ok(s) if s.kind == "completed" => Ok(shim.record(RawVerdict::Completed, stdout, s.return_value, stderr)),
        Ok(s) => {
            let mut excerpt = stderr;
            if let Some(name) = s.error {
                if !excerpt.contains(&name) {
                    excerpt.push_str(&name);
                }
            }
            Ok(shim.record(RawVerdict::Exception, stdout, None, excerpt))
        }
        Err(_) => {
            let mut excerpt = stderr;
            excerpt.push_str(&describe_exit(exit));
            Ok(shim.record(RawVerdict::Exception, stdout, None, excerpt))
        }
    }
}

fn main() {
    let shim = Shim { start: Instant::now() };
    let mut input = Vec::new();
    let record = match std::io::stdin().read_to_end(&mut input) {
        Err(e) => shim.record(RawVerdict::ProtocolError, String::new(), None, format!("reading request: {e}")),
        Ok(_) => match serde_json::from_slice::<ExecutionRequest>(&input) {
            Err(e) => shim.record(RawVerdict::ProtocolError, String::new(), None, format!("malformed request: {e}")),
            Ok(req) => match req.validate() {
                Err(e) => shim.record(RawVerdict::ProtocolError, String::new(), None, e),
                Ok(()) => run(&shim, &req).unwrap_or_else(|e| {
                    shim.record(RawVerdict::ProtocolError, String::new(), None, e)
                }),
            },
        },
    };
    emit(&record);
}
