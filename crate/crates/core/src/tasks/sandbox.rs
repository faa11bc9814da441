//! Sandboxed execution of generated code for pass@1 scoring.
//!
//! Disabled unless a sandbox is explicitly constructed: running generated
//! code is opt-in. The process sandbox writes the program to a temporary
//! file and runs it under an interpreter with a hard wall-clock timeout.

use std::io::Write;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SandboxError {
    #[error("code sandbox is not configured; code scoring is disabled")]
    Unavailable,
    #[error("sandbox failed to launch {interpreter}: {message}")]
    Launch {
        interpreter: String,
        message: String,
    },
    #[error("program exceeded the {limit_secs}s timeout")]
    Timeout { limit_secs: u64 },
}

/// Runs a program and reports whether it exited cleanly.
pub trait CodeSandbox: Send + Sync {
    fn run(&self, source: &str) -> Result<bool, SandboxError>;
}

/// Runs programs through an external interpreter (default `python3`).
pub struct ProcessSandbox {
    interpreter: String,
    timeout: Duration,
}

impl ProcessSandbox {
    pub fn new(interpreter: impl Into<String>, timeout: Duration) -> Self {
        Self {
            interpreter: interpreter.into(),
            timeout,
        }
    }

    pub fn python(timeout_secs: u64) -> Self {
        Self::new("python3", Duration::from_secs(timeout_secs))
    }
}

impl CodeSandbox for ProcessSandbox {
    fn run(&self, source: &str) -> Result<bool, SandboxError> {
        let mut child = Command::new(&self.interpreter)
            .arg("-")
            .stdin(Stdio::piped())
            .stdout(Stdio::null())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| SandboxError::Launch {
                interpreter: self.interpreter.clone(),
                message: e.to_string(),
            })?;
        child
            .stdin
            .take()
            .expect("stdin piped")
            .write_all(source.as_bytes())
            .ok();
        let started = Instant::now();
        loop {
            match child.try_wait() {
                Ok(Some(status)) => return Ok(status.success()),
                Ok(None) => {
                    if started.elapsed() > self.timeout {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(SandboxError::Timeout {
                            limit_secs: self.timeout.as_secs(),
                        });
                    }
                    std::thread::sleep(Duration::from_millis(10));
                }
                Err(e) => {
                    return Err(SandboxError::Launch {
                        interpreter: self.interpreter.clone(),
                        message: e.to_string(),
                    })
                }
            }
        }
    }
}
