//! Per-attempt execution environment and the five agent tools.

mod backend;
mod env;
mod handle;
mod paths;
mod tools;

use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use backend::{
    container_exec_args, container_run_args, BackendRegistry, ContainerBackend, LocalBackend,
    Runtime, SandboxBackend,
};
pub use env::{is_valid_var_name, EnvVarStore};
pub use handle::{SandboxFactory, SandboxHandle, SnapshotRef};
pub use paths::resolve_inside;
pub use tools::{
    ExecuteLinuxCommand, ExecuteLs, GetFile, SetEnvironmentVariable, Tool, ToolRegistry,
    WriteToFile, GET_FILE, LINUX_COMMAND, LS_COMMAND, SET_ENV, WRITE_FILE,
};

pub const MAX_READ_LINES: usize = 300;
pub const MAX_PAYLOAD_LINES: usize = 100;
pub const LOG_SUBDIR: &str = ".cveforge/logs";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum NetworkPolicy {
    #[default]
    Full,
    Restricted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SandboxSettings {
    pub foreground_timeout: Duration,
    pub background_sample: Duration,
    /// Sandboxes are created as `<root>/<sandbox_id>/work`.
    pub root: PathBuf,
    pub snapshot_root: PathBuf,
    /// Directories put ahead of the inherited PATH (local backend only).
    pub path_prefix: Vec<PathBuf>,
    pub image: String,
}

impl SandboxSettings {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        let root = root.into();
        Self {
            foreground_timeout: Duration::from_secs(300),
            background_sample: Duration::from_secs(5),
            snapshot_root: root.join("snapshots"),
            root,
            path_prefix: Vec::new(),
            image: "python:3.11-bookworm".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandLog {
    pub seq: u32,
    pub command: String,
    pub exit_code: Option<i32>,
    /// Relative to the sandbox workdir.
    pub stdout_path: String,
    pub stderr_path: String,
    pub started_ms: u64,
    pub ended_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolResult {
    pub tool_name: String,
    pub ok: bool,
    pub payload: String,
    pub log_path: Option<String>,
    pub truncated: bool,
    pub background: bool,
    pub still_running: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub command: Option<CommandLog>,
}

impl ToolResult {
    pub fn success(tool: &str, payload: impl Into<String>) -> Self {
        Self {
            tool_name: tool.to_string(),
            ok: true,
            payload: payload.into(),
            log_path: None,
            truncated: false,
            background: false,
            still_running: None,
            command: None,
        }
    }

    pub fn failure(tool: &str, message: impl Into<String>) -> Self {
        Self {
            ok: false,
            ..Self::success(tool, message)
        }
    }

    /// Text handed back to the model as the tool message.
    pub fn render(&self) -> String {
        let Some(log) = &self.command else {
            return if self.ok {
                self.payload.clone()
            } else {
                format!("ERROR: {}", self.payload)
            };
        };
        let mut out = String::new();
        match (self.still_running, log.exit_code) {
            (Some(true), _) => out.push_str("status: still running in background\n"),
            (_, Some(code)) => out.push_str(&format!("exit code: {code}\n")),
            (_, None) => out.push_str("status: killed (timeout)\n"),
        }
        out.push_str(&format!(
            "stdout log: {}\nstderr log: {}\n",
            log.stdout_path, log.stderr_path
        ));
        if self.truncated {
            out.push_str(&format!(
                "(output truncated, showing last {MAX_PAYLOAD_LINES} lines; read the logs for the rest)\n"
            ));
        }
        out.push_str("--- output ---\n");
        out.push_str(&self.payload);
        out
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SandboxError {
    #[error("file not found: {0}")]
    FileNotFound(String),
    #[error("{path} is not a text file ({bytes} bytes); binary content is not returned")]
    NotAText { path: String, bytes: u64 },
    #[error("path escapes the sandbox: {0}")]
    PathEscapesSandbox(String),
    #[error("write failed for {path}: {reason}")]
    WriteFailed { path: String, reason: String },
    #[error("directory not found: {0}")]
    DirNotFound(String),
    #[error("command timed out after {secs}s and was killed")]
    Timeout {
        secs: u64,
        log: CommandLog,
        tail: String,
    },
    #[error("failed to spawn command: {0}")]
    SpawnFailed(String),
    #[error("invalid environment variable name: {0:?}")]
    InvalidName(String),
    #[error("snapshot failed: {0}")]
    SnapshotFailed(String),
    #[error("empty command")]
    EmptyCommand,
    #[error("backend error: {0}")]
    Backend(String),
}

impl SandboxError {
    pub fn into_result(self, tool: &str) -> ToolResult {
        match self {
            SandboxError::Timeout { ref log, ref tail, .. } => {
                let mut r = ToolResult::failure(tool, tail.clone());
                r.log_path = Some(log.stdout_path.clone());
                r.command = Some(log.clone());
                r.payload = format!("{self}\n{tail}");
                r
            }
            other => ToolResult::failure(tool, other.to_string()),
        }
    }
}

pub(crate) fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}
