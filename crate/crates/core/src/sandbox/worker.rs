//! External worker processes speaking `exec/1` over stdin/stdout.
//!
//! One request is in flight per process. A worker that misses its deadline,
//! dies, or answers out of protocol is killed and never reused; the next
//! request that needs a worker spawns a fresh one.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{ExecRequest, ExecResponse, ExecStatus, Executor, SandboxError};

/// How to launch a worker. Workers take no arguments by convention, but a
/// launcher (e.g. an interpreter plus script path) may need some.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkerCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
}

struct WorkerProcess {
    child: Child,
    stdin: ChildStdin,
    lines: Receiver<std::io::Result<String>>,
}

enum Reply {
    Line(String),
    Silent,
}

impl WorkerProcess {
    fn spawn(cmd: &WorkerCommand, timeout_ms: u64) -> Result<Self, SandboxError> {
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .env("QVF_TIMEOUT_MS", timeout_ms.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| {
                SandboxError::WorkerUnavailable(format!("cannot launch `{}`: {e}", cmd.program))
            })?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, lines) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                let stop = line.is_err();
                if tx.send(line).is_err() || stop {
                    break;
                }
            }
        });
        Ok(Self {
            child,
            stdin,
            lines,
        })
    }

    fn round_trip(&mut self, line: &str, budget: Duration) -> Result<Reply, SandboxError> {
        let gone = |e: String| SandboxError::WorkerUnavailable(e);
        writeln!(self.stdin, "{line}").map_err(|e| gone(format!("write failed: {e}")))?;
        self.stdin
            .flush()
            .map_err(|e| gone(format!("flush failed: {e}")))?;
        match self.lines.recv_timeout(budget) {
            Ok(Ok(l)) => Ok(Reply::Line(l)),
            Ok(Err(e)) => Err(gone(format!("read failed: {e}"))),
            Err(RecvTimeoutError::Timeout) => Ok(Reply::Silent),
            Err(RecvTimeoutError::Disconnected) => Err(gone("worker closed its output".into())),
        }
    }
}

impl Drop for WorkerProcess {
    fn drop(&mut self) {
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

pub struct WorkerPool {
    command: WorkerCommand,
    idle: Mutex<Vec<WorkerProcess>>,
    capacity: usize,
    default_timeout_ms: u64,
    /// Extra time allowed on top of each request's budget for process
    /// start-up and pipe latency.
    grace: Duration,
    kills: AtomicUsize,
}

impl WorkerPool {
    pub fn new(command: WorkerCommand, capacity: usize, default_timeout_ms: u64) -> Self {
        Self {
            command,
            idle: Mutex::new(Vec::new()),
            capacity: capacity.max(1),
            default_timeout_ms,
            grace: Duration::from_millis(2000),
            kills: AtomicUsize::new(0),
        }
    }

    pub fn with_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    /// Workers killed so far (timeouts and protocol violations).
    pub fn kills(&self) -> usize {
        self.kills.load(Ordering::SeqCst)
    }

    fn checkout(&self) -> Result<WorkerProcess, SandboxError> {
        if let Some(w) = self.idle.lock().expect("pool lock").pop() {
            return Ok(w);
        }
        WorkerProcess::spawn(&self.command, self.default_timeout_ms)
    }

    fn checkin(&self, w: WorkerProcess) {
        let mut idle = self.idle.lock().expect("pool lock");
        if idle.len() < self.capacity {
            idle.push(w);
        }
    }

    fn discard(&self, w: WorkerProcess) {
        self.kills.fetch_add(1, Ordering::SeqCst);
        drop(w);
    }
}

impl Executor for WorkerPool {
    fn id(&self) -> String {
        let mut id = format!("worker:{}", self.command.program);
        for a in &self.command.args {
            id.push(' ');
            id.push_str(a);
        }
        id
    }

    fn execute(&self, req: &ExecRequest) -> Result<ExecResponse, SandboxError> {
        req.validate()?;
        let line = serde_json::to_string(req).expect("request serializes");
        let mut worker = self.checkout()?;
        let start = Instant::now();
        let budget = Duration::from_millis(req.timeout_ms) + self.grace;
        let reply = match worker.round_trip(&line, budget) {
            Ok(r) => r,
            Err(e) => {
                self.discard(worker);
                return Err(e);
            }
        };
        let elapsed = start.elapsed().as_millis() as u64;
        match reply {
            Reply::Silent => {
                self.discard(worker);
                let reason = format!("timed out after {} ms", req.timeout_ms);
                Ok(ExecResponse::failed(
                    req,
                    ExecStatus::Timeout,
                    &reason,
                    elapsed,
                ))
            }
            Reply::Line(text) => {
                let parsed = serde_json::from_str::<ExecResponse>(&text)
                    .map_err(|e| SandboxError::Protocol(format!("malformed response: {e}")))
                    .and_then(|resp| resp.conforms_to(req).map(|_| resp));
                match parsed {
                    Ok(resp) => {
                        self.checkin(worker);
                        Ok(resp)
                    }
                    Err(e) => {
                        self.discard(worker);
                        Err(e)
                    }
                }
            }
        }
    }
}
