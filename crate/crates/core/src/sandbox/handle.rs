use std::fs::File;
use std::os::unix::process::CommandExt;
use std::path::{Path, PathBuf};
use std::process::{Child, Stdio};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::backend::{Runtime, SandboxBackend};
use super::paths::resolve_inside;
use super::{
    now_ms, CommandLog, EnvVarStore, NetworkPolicy, SandboxError, SandboxSettings, ToolResult,
    LOG_SUBDIR, MAX_PAYLOAD_LINES, MAX_READ_LINES,
};
use crate::fsutil;

const POLL: Duration = Duration::from_millis(10);

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SnapshotRef(pub String);

impl std::fmt::Display for SnapshotRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SnapshotMeta {
    sandbox_id: String,
    backend: String,
    image: Option<String>,
    network_policy: NetworkPolicy,
    created_ms: u64,
}

/// Creates and restores sandboxes for one backend.
#[derive(Debug, Clone)]
pub struct SandboxFactory {
    backend: Arc<dyn SandboxBackend>,
    settings: SandboxSettings,
}

impl SandboxFactory {
    pub fn new(backend: Arc<dyn SandboxBackend>, settings: SandboxSettings) -> Self {
        Self { backend, settings }
    }

    pub fn settings(&self) -> &SandboxSettings {
        &self.settings
    }

    pub fn backend_name(&self) -> &str {
        self.backend.name()
    }

    /// New sandbox whose workdir starts as a copy of `source` (or empty).
    pub fn create(&self, source: Option<&Path>) -> Result<SandboxHandle, SandboxError> {
        let id = new_id();
        let workdir = self.settings.root.join(&id).join("work");
        std::fs::create_dir_all(&workdir).map_err(|e| SandboxError::Backend(e.to_string()))?;
        if let Some(src) = source {
            fsutil::copy_dir(src, &workdir)
                .map_err(|e| SandboxError::Backend(format!("copying {}: {e}", src.display())))?;
        }
        self.open(id, workdir, EnvVarStore::default(), None, NetworkPolicy::Full)
    }

    pub fn restore(&self, reference: &SnapshotRef) -> Result<SandboxHandle, SandboxError> {
        let dir = self.settings.snapshot_root.join(&reference.0);
        let unknown = || SandboxError::SnapshotFailed(format!("unknown snapshot reference {reference}"));
        if reference.0.contains('/') || reference.0.contains("..") {
            return Err(unknown());
        }
        let meta: SnapshotMeta = std::fs::read_to_string(dir.join("meta.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .ok_or_else(unknown)?;
        if meta.backend != self.backend.name() {
            return Err(SandboxError::SnapshotFailed(format!(
                "snapshot {reference} was taken with backend {}",
                meta.backend
            )));
        }
        let env: EnvVarStore = std::fs::read_to_string(dir.join("env.json"))
            .ok()
            .and_then(|t| serde_json::from_str(&t).ok())
            .ok_or_else(|| SandboxError::SnapshotFailed("env.json unreadable".into()))?;
        let id = new_id();
        let workdir = self.settings.root.join(&id).join("work");
        fsutil::copy_dir(&dir.join("work"), &workdir)
            .map_err(|e| SandboxError::SnapshotFailed(e.to_string()))?;
        self.open(id, workdir, env, meta.image.as_deref(), meta.network_policy)
    }

    fn open(
        &self,
        id: String,
        workdir: PathBuf,
        env: EnvVarStore,
        image: Option<&str>,
        policy: NetworkPolicy,
    ) -> Result<SandboxHandle, SandboxError> {
        let runtime = self.backend.provision(&id, &workdir, &self.settings, image)?;
        Ok(SandboxHandle {
            sandbox_id: id,
            log_dir: workdir.join(LOG_SUBDIR),
            workdir,
            backend_name: self.backend.name().to_string(),
            settings: self.settings.clone(),
            runtime,
            state: Mutex::new(State {
                env,
                seq: 0,
                background: Vec::new(),
                logs: Vec::new(),
                policy,
                deadline: None,
            }),
        })
    }
}

fn new_id() -> String {
    let mut id = uuid::Uuid::new_v4().simple().to_string();
    id.truncate(12);
    format!("sb-{id}")
}

#[derive(Debug)]
struct State {
    env: EnvVarStore,
    seq: u32,
    background: Vec<Child>,
    logs: Vec<CommandLog>,
    policy: NetworkPolicy,
    deadline: Option<Instant>,
}

/// One reproduction attempt's environment. Tool calls are serialized through
/// an internal lock, so the handle can be shared by reference across agents.
#[derive(Debug)]
pub struct SandboxHandle {
    sandbox_id: String,
    workdir: PathBuf,
    log_dir: PathBuf,
    backend_name: String,
    settings: SandboxSettings,
    runtime: Box<dyn Runtime>,
    state: Mutex<State>,
}

impl SandboxHandle {
    pub fn id(&self) -> &str {
        &self.sandbox_id
    }

    pub fn workdir(&self) -> &Path {
        &self.workdir
    }

    pub fn log_dir(&self) -> &Path {
        &self.log_dir
    }

    pub fn backend_name(&self) -> &str {
        &self.backend_name
    }

    pub fn settings(&self) -> &SandboxSettings {
        &self.settings
    }

    fn state(&self) -> MutexGuard<'_, State> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn env(&self) -> EnvVarStore {
        self.state().env.clone()
    }

    pub fn network_policy(&self) -> NetworkPolicy {
        self.state().policy
    }

    pub fn set_network_policy(&self, policy: NetworkPolicy) {
        self.state().policy = policy;
    }

    /// Foreground commands never wait past this instant.
    pub fn set_deadline(&self, deadline: Option<Instant>) {
        self.state().deadline = deadline;
    }

    pub fn command_logs(&self) -> Vec<CommandLog> {
        self.state().logs.clone()
    }

    pub fn resolve(&self, path: &str) -> Result<PathBuf, SandboxError> {
        resolve_inside(&self.workdir, &self.runtime.guest_workdir(), path)
    }

    pub fn get_file(&self, path: &str, offset: usize, count: usize) -> Result<ToolResult, SandboxError> {
        let _serial = self.state();
        let full = self.resolve(path)?;
        if !full.is_file() {
            return Err(SandboxError::FileNotFound(path.to_string()));
        }
        let bytes = std::fs::read(&full).map_err(|_| SandboxError::FileNotFound(path.to_string()))?;
        let sniff = &bytes[..bytes.len().min(8192)];
        let text = match std::str::from_utf8(&bytes) {
            Ok(t) if !sniff.contains(&0) => t,
            _ => {
                return Err(SandboxError::NotAText {
                    path: path.to_string(),
                    bytes: bytes.len() as u64,
                })
            }
        };
        let lines: Vec<&str> = text.lines().collect();
        let total = lines.len();
        let take = count.min(MAX_READ_LINES);
        let start = offset.min(total);
        let end = (start + take).min(total);
        let more = end < total;
        let header = if start == end {
            format!("[file {path} | no lines in range (total {total}) | end of file]")
        } else if more {
            format!(
                "[file {path} | lines {}-{end} of {total} | more below: use offset={end}]",
                start + 1
            )
        } else {
            format!("[file {path} | lines {}-{end} of {total} | end of file]", start + 1)
        };
        let mut payload = header;
        for l in &lines[start..end] {
            payload.push('\n');
            payload.push_str(l);
        }
        let mut r = ToolResult::success(super::GET_FILE, payload);
        r.truncated = more;
        Ok(r)
    }

    pub fn write_to_file(&self, path: &str, content: &str) -> Result<ToolResult, SandboxError> {
        let _serial = self.state();
        let full = self.resolve(path)?;
        if full == self.workdir || full.is_dir() {
            return Err(SandboxError::WriteFailed {
                path: path.to_string(),
                reason: "is a directory".into(),
            });
        }
        fsutil::write_atomic(&full, content.as_bytes()).map_err(|e| SandboxError::WriteFailed {
            path: path.to_string(),
            reason: e.to_string(),
        })?;
        Ok(ToolResult::success(
            super::WRITE_FILE,
            format!("wrote {} bytes to {path}", content.len()),
        ))
    }

    /// Sorted entry names, directories suffixed with `/`.
    pub fn execute_ls(&self, dir: &str) -> Result<ToolResult, SandboxError> {
        let _serial = self.state();
        let full = self.resolve(dir)?;
        let rd = std::fs::read_dir(&full).map_err(|_| SandboxError::DirNotFound(dir.to_string()))?;
        let mut names: Vec<String> = rd
            .filter_map(Result::ok)
            .map(|e| {
                let mut n = e.file_name().to_string_lossy().into_owned();
                if e.file_type().map(|t| t.is_dir()).unwrap_or(false) {
                    n.push('/');
                }
                n
            })
            .collect();
        names.sort();
        Ok(ToolResult::success(super::LS_COMMAND, names.join("\n")))
    }

    pub fn set_env(&self, name: &str, value: &str) -> Result<ToolResult, SandboxError> {
        self.state().env.set(name, value)?;
        Ok(ToolResult::success(super::SET_ENV, format!("{name} set for subsequent commands")))
    }

    pub fn clear_env(&self) -> ToolResult {
        self.state().env.clear();
        ToolResult::success(super::SET_ENV, "all agent-set environment variables cleared")
    }

    pub fn execute(&self, command: &str, background: bool) -> Result<ToolResult, SandboxError> {
        let policy = self.network_policy();
        self.execute_with(command, background, policy, self.settings.foreground_timeout)
    }

    pub fn execute_with(
        &self,
        command: &str,
        background: bool,
        policy: NetworkPolicy,
        timeout: Duration,
    ) -> Result<ToolResult, SandboxError> {
        if command.trim().is_empty() {
            return Err(SandboxError::EmptyCommand);
        }
        let mut st = self.state();
        st.seq += 1;
        let seq = st.seq;
        std::fs::create_dir_all(&self.log_dir).map_err(|e| SandboxError::SpawnFailed(e.to_string()))?;
        let out_rel = format!("{LOG_SUBDIR}/{seq:04}_out.log");
        let err_rel = format!("{LOG_SUBDIR}/{seq:04}_err.log");
        let open = |rel: &str| File::create(self.workdir.join(rel)).map_err(|e| SandboxError::SpawnFailed(e.to_string()));
        let (out_f, err_f) = (open(&out_rel)?, open(&err_rel)?);

        let timeout = match st.deadline {
            Some(d) if !background => timeout.min(d.saturating_duration_since(Instant::now())),
            _ => timeout,
        };
        self.runtime.set_network(policy)?;
        let mut cmd = self
            .runtime
            .command(command, &st.env, policy, (!background).then_some(timeout));
        cmd.stdin(Stdio::null())
            .stdout(out_f)
            .stderr(err_f)
            .process_group(0);
        let mut log = CommandLog {
            seq,
            command: command.to_string(),
            exit_code: None,
            stdout_path: out_rel.clone(),
            stderr_path: err_rel,
            started_ms: now_ms(),
            ended_ms: None,
        };
        let mut child = match cmd.spawn() {
            Ok(c) => c,
            Err(e) => {
                log.ended_ms = Some(now_ms());
                st.logs.push(log);
                return Err(SandboxError::SpawnFailed(e.to_string()));
            }
        };

        let window = if background {
            self.settings.background_sample
        } else {
            timeout
        };
        let status = wait_for(&mut child, window);
        let mut still_running = None;
        match status {
            Some(code) => {
                log.exit_code = Some(code);
                log.ended_ms = Some(now_ms());
                if background {
                    still_running = Some(false);
                }
            }
            None if background => {
                still_running = Some(true);
                st.background.push(child);
            }
            None => {
                kill_group(&mut child);
                log.ended_ms = Some(now_ms());
                st.logs.push(log.clone());
                let (tail, _) = self.tail(&log);
                return Err(SandboxError::Timeout {
                    secs: timeout.as_secs(),
                    log,
                    tail,
                });
            }
        }
        st.logs.push(log.clone());
        drop(st);

        let (payload, truncated) = self.tail(&log);
        Ok(ToolResult {
            tool_name: super::LINUX_COMMAND.into(),
            ok: log.exit_code.map_or(true, |c| c == 0),
            payload,
            log_path: Some(out_rel),
            truncated,
            background,
            still_running,
            command: Some(log),
        })
    }

    /// Last lines of stdout followed by stderr, capped at the payload limit.
    fn tail(&self, log: &CommandLog) -> (String, bool) {
        let read = |rel: &str| {
            std::fs::read(self.workdir.join(rel))
                .map(|b| String::from_utf8_lossy(&b).into_owned())
                .unwrap_or_default()
        };
        let (out, err) = (read(&log.stdout_path), read(&log.stderr_path));
        let lines: Vec<&str> = out.lines().chain(err.lines()).collect();
        let start = lines.len().saturating_sub(MAX_PAYLOAD_LINES);
        (lines[start..].join("\n"), start > 0)
    }

    /// Copies the workdir and environment into the snapshot store.
    pub fn snapshot(&self) -> Result<SnapshotRef, SandboxError> {
        let st = self.state();
        let reference = SnapshotRef(format!("snap-{}", uuid::Uuid::new_v4().simple()));
        let dir = self.settings.snapshot_root.join(&reference.0);
        let fail = |e: std::io::Error| SandboxError::SnapshotFailed(e.to_string());
        fsutil::copy_dir(&self.workdir, &dir.join("work")).map_err(fail)?;
        let env = serde_json::to_string_pretty(&st.env).unwrap_or_default();
        fsutil::write_atomic(&dir.join("env.json"), env.as_bytes()).map_err(fail)?;
        let image = self.runtime.commit(&reference.0)?;
        let meta = SnapshotMeta {
            sandbox_id: self.sandbox_id.clone(),
            backend: self.backend_name.clone(),
            image,
            network_policy: st.policy,
            created_ms: now_ms(),
        };
        let meta = serde_json::to_string_pretty(&meta).unwrap_or_default();
        fsutil::write_atomic(&dir.join("meta.json"), meta.as_bytes()).map_err(fail)?;
        Ok(reference)
    }

    /// Kills background processes and releases backend resources.
    pub fn teardown(&self) {
        let mut st = self.state();
        for mut child in st.background.drain(..) {
            kill_group(&mut child);
        }
        self.runtime.teardown();
    }

    pub fn background_count(&self) -> usize {
        let mut st = self.state();
        st.background.retain_mut(|c| matches!(c.try_wait(), Ok(None)));
        st.background.len()
    }
}

impl Drop for SandboxHandle {
    fn drop(&mut self) {
        self.teardown();
    }
}

fn wait_for(child: &mut Child, window: Duration) -> Option<i32> {
    let until = Instant::now() + window;
    loop {
        if let Ok(Some(status)) = child.try_wait() {
            return Some(exit_code(status));
        }
        let now = Instant::now();
        if now >= until {
            return None;
        }
        std::thread::sleep(POLL.min(until - now));
    }
}

fn exit_code(status: std::process::ExitStatus) -> i32 {
    use std::os::unix::process::ExitStatusExt;
    status.code().unwrap_or_else(|| 128 + status.signal().unwrap_or(0))
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: signalling a process group we created with process_group(0).
    unsafe {
        libc::killpg(pid, libc::SIGKILL);
    }
    let _ = child.kill();
    let _ = child.wait();
}
