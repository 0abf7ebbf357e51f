//! Child-process plumbing: scrubbed environment, own process group,
//! capped pipes and a wall-clock deadline.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::thread;
use std::time::{Duration, Instant};

pub(crate) struct RunSpec<'a> {
    pub argv: &'a [String],
    pub cwd: &'a Path,
    pub stdin: &'a [u8],
    pub time_limit: Duration,
    pub max_output_bytes: usize,
    pub memory_limit_mb: Option<u64>,
}

#[derive(Debug)]
pub(crate) struct RunResult {
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub stdout_truncated: bool,
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    pub elapsed: Duration,
}

impl RunResult {
    pub fn success(&self) -> bool {
        !self.timed_out && self.status.is_some_and(|s| s.success())
    }

    pub fn exit_code(&self) -> Option<i32> {
        self.status.and_then(|s| s.code())
    }

    pub fn signal(&self) -> Option<i32> {
        self.status.and_then(|s| s.signal())
    }
}

const ENV_ALLOWLIST: &[&str] = &["PATH"];

pub(crate) fn run(spec: &RunSpec<'_>) -> io::Result<RunResult> {
    let (program, args) = spec
        .argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty interpreter command"))?;

    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(spec.cwd)
        .env_clear()
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    for key in ENV_ALLOWLIST {
        if let Ok(v) = std::env::var(key) {
            cmd.env(key, v);
        }
    }
    cmd.env("HOME", spec.cwd)
        .env("TMPDIR", spec.cwd)
        .env("LANG", "C.UTF-8")
        .env("LC_ALL", "C.UTF-8")
        .env("PYTHONIOENCODING", "utf-8")
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONHASHSEED", "0");

    let memory_limit = spec.memory_limit_mb;
    // SAFETY: only async-signal-safe libc calls between fork and exec.
    unsafe {
        cmd.pre_exec(move || {
            if libc::setsid() == -1 {
                return Err(io::Error::last_os_error());
            }
            if let Some(mb) = memory_limit {
                let bytes = mb.saturating_mul(1024 * 1024) as libc::rlim_t;
                let lim = libc::rlimit {
                    rlim_cur: bytes,
                    rlim_max: bytes,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) == -1 {
                    return Err(io::Error::last_os_error());
                }
            }
            Ok(())
        });
    }

    let start = Instant::now();
    let mut child = cmd.spawn()?;
    let pgid = child.id() as libc::pid_t;

    let stdin_bytes = spec.stdin.to_vec();
    let mut stdin = child.stdin.take().expect("stdin piped");
    let writer = thread::spawn(move || {
        // the child may exit without reading; a broken pipe is fine
        let _ = stdin.write_all(&stdin_bytes);
    });
    let cap = spec.max_output_bytes;
    let stdout = capped_reader(child.stdout.take().expect("stdout piped"), cap);
    let stderr = capped_reader(child.stderr.take().expect("stderr piped"), cap.max(64 * 1024));

    let (status, timed_out) = wait_with_deadline(&mut child, start + spec.time_limit, pgid)?;
    // take down anything the candidate left behind in its group
    kill_group(pgid);

    let _ = writer.join();
    let (stdout, stdout_truncated) = stdout.join().unwrap_or_default();
    let (stderr, _) = stderr.join().unwrap_or_default();
    Ok(RunResult {
        stdout,
        stderr,
        stdout_truncated,
        status,
        timed_out,
        elapsed: start.elapsed(),
    })
}

fn wait_with_deadline(
    child: &mut Child,
    deadline: Instant,
    pgid: libc::pid_t,
) -> io::Result<(Option<ExitStatus>, bool)> {
    let mut nap = Duration::from_millis(1);
    loop {
        if let Some(status) = child.try_wait()? {
            return Ok((Some(status), false));
        }
        let now = Instant::now();
        if now >= deadline {
            kill_group(pgid);
            let status = child.wait()?;
            return Ok((Some(status), true));
        }
        thread::sleep(nap.min(deadline - now));
        nap = (nap * 2).min(Duration::from_millis(10));
    }
}

fn kill_group(pgid: libc::pid_t) {
    // SAFETY: signalling a process group we created; ESRCH is expected when
    // the group is already gone.
    unsafe {
        libc::killpg(pgid, libc::SIGKILL);
    }
}

fn capped_reader<R: Read + Send + 'static>(mut src: R, cap: usize) -> thread::JoinHandle<(Vec<u8>, bool)> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut truncated = false;
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    if n > room {
                        truncated = true;
                    }
                    kept.extend_from_slice(&buf[..n.min(room)]);
                }
                Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
                Err(_) => break,
            }
        }
        (kept, truncated)
    })
}
