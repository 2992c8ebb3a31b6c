//! Line-delimited JSON transport to external helper processes.
//!
//! Landmark detectors, embedding extractors and latent generators all live
//! behind the same contract: the toolkit spawns a configured command, writes
//! one JSON request per line on its stdin and reads exactly one JSON
//! response line per request from its stdout. A response of the form
//! `{"error": "..."}` is a remote failure; EOF, a nonzero exit, a timeout or
//! a line that is not a JSON object are transport failures.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError};
use std::thread::JoinHandle;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

const DEFAULT_TIMEOUT_SECS: u64 = 600;

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("adapter command is empty")]
    EmptyCommand,
    #[error("failed to spawn adapter `{program}`: {source}")]
    Spawn {
        program: String,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to write request to adapter: {0}")]
    Write(#[source] std::io::Error),
    #[error("adapter did not answer within {0:?}")]
    Timeout(Duration),
    #[error("adapter closed its output ({status})")]
    Closed { status: String },
    #[error("malformed adapter response {line:?}: {reason}")]
    Malformed { line: String, reason: String },
    #[error("adapter reported an error: {0}")]
    Remote(String),
}

/// How to launch an adapter process.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AdapterCommand {
    pub program: String,
    #[serde(default)]
    pub args: Vec<String>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_timeout() -> u64 {
    DEFAULT_TIMEOUT_SECS
}

impl AdapterCommand {
    pub fn new(program: impl Into<String>, args: impl IntoIterator<Item = impl Into<String>>) -> Self {
        Self {
            program: program.into(),
            args: args.into_iter().map(Into::into).collect(),
            timeout_secs: DEFAULT_TIMEOUT_SECS,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout_secs = timeout.as_secs().max(1);
        self
    }

    pub fn spawn(&self) -> Result<AdapterProcess, AdapterError> {
        AdapterProcess::spawn(self)
    }
}

/// A running adapter. One request is in flight at a time.
pub struct AdapterProcess {
    child: Child,
    stdin: Option<ChildStdin>,
    lines: Receiver<std::io::Result<String>>,
    reader: Option<JoinHandle<()>>,
    timeout: Duration,
}

impl AdapterProcess {
    pub fn spawn(cmd: &AdapterCommand) -> Result<Self, AdapterError> {
        if cmd.program.trim().is_empty() {
            return Err(AdapterError::EmptyCommand);
        }
        let mut child = Command::new(&cmd.program)
            .args(&cmd.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()
            .map_err(|source| AdapterError::Spawn {
                program: cmd.program.clone(),
                source,
            })?;
        let stdin = child.stdin.take();
        let stdout = child.stdout.take().expect("stdout was piped");

        let (tx, rx) = mpsc::channel();
        let reader = std::thread::spawn(move || {
            let mut reader = BufReader::new(stdout);
            loop {
                let mut line = String::new();
                match reader.read_line(&mut line) {
                    Ok(0) => break,
                    Ok(_) => {
                        if tx.send(Ok(line)).is_err() {
                            break;
                        }
                    }
                    Err(e) => {
                        let _ = tx.send(Err(e));
                        break;
                    }
                }
            }
        });

        Ok(Self {
            child,
            stdin,
            lines: rx,
            reader: Some(reader),
            timeout: Duration::from_secs(cmd.timeout_secs.max(1)),
        })
    }

    /// Sends one request and waits for its response line.
    ///
    /// Remote `{"error": ...}` responses are turned into
    /// [`AdapterError::Remote`].
    pub fn request(&mut self, request: &Value) -> Result<Value, AdapterError> {
        let mut line = serde_json::to_string(request).expect("JSON values always serialize");
        line.push('\n');
        let stdin = self.stdin.as_mut().ok_or_else(|| AdapterError::Closed {
            status: "stdin closed".into(),
        })?;
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            // A dead child shows up as a broken pipe; report its exit status.
            if let Some(status) = self.exit_status() {
                return Err(AdapterError::Closed { status });
            }
            return Err(AdapterError::Write(e));
        }

        let raw = match self.lines.recv_timeout(self.timeout) {
            Ok(Ok(raw)) => raw,
            Ok(Err(e)) => {
                return Err(AdapterError::Closed {
                    status: format!("read error: {e}"),
                })
            }
            Err(RecvTimeoutError::Timeout) => {
                let _ = self.child.kill();
                return Err(AdapterError::Timeout(self.timeout));
            }
            Err(RecvTimeoutError::Disconnected) => {
                let status = self
                    .wait_exit_status()
                    .unwrap_or_else(|| "output closed, process still running".into());
                return Err(AdapterError::Closed { status });
            }
        };

        parse_response(raw.trim_end_matches(['\r', '\n']))
    }

    fn exit_status(&mut self) -> Option<String> {
        match self.child.try_wait() {
            Ok(Some(status)) => Some(status.to_string()),
            _ => None,
        }
    }

    fn wait_exit_status(&mut self) -> Option<String> {
        for _ in 0..100 {
            if let Some(status) = self.exit_status() {
                return Some(status);
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        None
    }
}

/// Validates one response line: it must be a JSON object, and an `error`
/// member turns it into a remote failure.
pub fn parse_response(line: &str) -> Result<Value, AdapterError> {
    let value: Value = serde_json::from_str(line).map_err(|e| AdapterError::Malformed {
        line: line.to_string(),
        reason: e.to_string(),
    })?;
    let obj = value.as_object().ok_or_else(|| AdapterError::Malformed {
        line: line.to_string(),
        reason: "response is not a JSON object".into(),
    })?;
    if let Some(err) = obj.get("error") {
        let msg = match err {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        };
        return Err(AdapterError::Remote(msg));
    }
    Ok(value)
}

impl Drop for AdapterProcess {
    fn drop(&mut self) {
        // Closing stdin lets a well-behaved adapter exit on end-of-input.
        self.stdin.take();
        for _ in 0..20 {
            if matches!(self.child.try_wait(), Ok(Some(_))) {
                return;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        let _ = self.child.kill();
        let _ = self.child.wait();
        // The reader thread is detached: grandchildren may still hold the pipe.
        self.reader.take();
    }
}
