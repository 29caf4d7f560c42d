use std::collections::BTreeMap;
use std::fmt::Debug;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::{EnvVarStore, NetworkPolicy, SandboxError, SandboxSettings};

/// Proxy settings pointing at the discard port; used to cut off HTTP(S)
/// egress for well-behaved clients on the local backend.
const BLACKHOLE_PROXY: &str = "http://127.0.0.1:9";
const PROXY_VARS: &[&str] = &[
    "http_proxy",
    "https_proxy",
    "HTTP_PROXY",
    "HTTPS_PROXY",
    "ALL_PROXY",
    "all_proxy",
];

/// A provisioned environment able to run shell commands against the workdir.
pub trait Runtime: Send + Sync + Debug {
    /// The workdir as seen from inside the environment.
    fn guest_workdir(&self) -> PathBuf;
    /// Builds the process that runs `script` with the agent environment applied.
    /// `timeout` is an in-environment kill switch for runtimes where killing the
    /// local process group does not reach the real process.
    fn command(
        &self,
        script: &str,
        env: &EnvVarStore,
        policy: NetworkPolicy,
        timeout: Option<Duration>,
    ) -> Command;
    fn set_network(&self, _policy: NetworkPolicy) -> Result<(), SandboxError> {
        Ok(())
    }
    /// Persists non-filesystem state; returns an image reference if one was made.
    fn commit(&self, _tag: &str) -> Result<Option<String>, SandboxError> {
        Ok(None)
    }
    fn teardown(&self) {}
}

pub trait SandboxBackend: Send + Sync + Debug {
    fn name(&self) -> &str;
    fn provision(
        &self,
        sandbox_id: &str,
        workdir: &Path,
        settings: &SandboxSettings,
        image: Option<&str>,
    ) -> Result<Box<dyn Runtime>, SandboxError>;
}

#[derive(Debug, Default)]
pub struct LocalBackend;

impl SandboxBackend for LocalBackend {
    fn name(&self) -> &str {
        "local"
    }

    fn provision(
        &self,
        _sandbox_id: &str,
        workdir: &Path,
        settings: &SandboxSettings,
        _image: Option<&str>,
    ) -> Result<Box<dyn Runtime>, SandboxError> {
        Ok(Box::new(LocalRuntime {
            workdir: workdir.to_path_buf(),
            path_prefix: settings.path_prefix.clone(),
        }))
    }
}

#[derive(Debug)]
struct LocalRuntime {
    workdir: PathBuf,
    path_prefix: Vec<PathBuf>,
}

impl Runtime for LocalRuntime {
    fn guest_workdir(&self) -> PathBuf {
        self.workdir.clone()
    }

    fn command(
        &self,
        script: &str,
        env: &EnvVarStore,
        policy: NetworkPolicy,
        _timeout: Option<Duration>,
    ) -> Command {
        let mut cmd = Command::new("sh");
        cmd.arg("-c").arg(script).current_dir(&self.workdir);
        // Never leak provider credentials into agent commands.
        for (k, _) in std::env::vars_os() {
            if k.to_string_lossy().starts_with("CVEFORGE_") {
                cmd.env_remove(&k);
            }
        }
        if !self.path_prefix.is_empty() {
            let mut dirs = self.path_prefix.clone();
            if let Some(p) = std::env::var_os("PATH") {
                dirs.extend(std::env::split_paths(&p));
            }
            if let Ok(joined) = std::env::join_paths(dirs) {
                cmd.env("PATH", joined);
            }
        }
        if policy == NetworkPolicy::Restricted {
            for v in PROXY_VARS {
                cmd.env(v, BLACKHOLE_PROXY);
            }
            cmd.env("no_proxy", "").env("NO_PROXY", "");
            cmd.env("PIP_NO_INDEX", "1");
        }
        cmd.envs(env.vars());
        cmd
    }
}

/// Docker (or compatible CLI) backed sandbox. The workdir is bind-mounted at
/// `/work` so file tools operate on the host copy.
#[derive(Debug, Clone)]
pub struct ContainerBackend {
    pub cli: String,
}

impl Default for ContainerBackend {
    fn default() -> Self {
        Self {
            cli: "docker".into(),
        }
    }
}

pub const CONTAINER_WORKDIR: &str = "/work";

pub fn container_run_args(name: &str, workdir: &Path, image: &str) -> Vec<String> {
    vec![
        "run".into(),
        "-d".into(),
        "--name".into(),
        name.into(),
        "-v".into(),
        format!("{}:{CONTAINER_WORKDIR}", workdir.display()),
        "-w".into(),
        CONTAINER_WORKDIR.into(),
        image.into(),
        "sleep".into(),
        "infinity".into(),
    ]
}

pub fn container_exec_args(
    name: &str,
    script: &str,
    env: &EnvVarStore,
    timeout: Option<Duration>,
) -> Vec<String> {
    let mut args = vec!["exec".into(), "-w".into(), CONTAINER_WORKDIR.into()];
    for (k, v) in env.vars() {
        args.push("-e".into());
        args.push(format!("{k}={v}"));
    }
    args.push(name.into());
    if let Some(t) = timeout {
        args.extend(["timeout".into(), "-s".into(), "KILL".into()]);
        args.push(format!("{}", t.as_secs().max(1)));
    }
    args.extend(["sh".into(), "-c".into(), script.into()]);
    args
}

impl SandboxBackend for ContainerBackend {
    fn name(&self) -> &str {
        "container"
    }

    fn provision(
        &self,
        sandbox_id: &str,
        workdir: &Path,
        settings: &SandboxSettings,
        image: Option<&str>,
    ) -> Result<Box<dyn Runtime>, SandboxError> {
        let name = format!("cveforge-{sandbox_id}");
        let image = image.unwrap_or(&settings.image);
        run_cli(&self.cli, &container_run_args(&name, workdir, image))?;
        Ok(Box::new(ContainerRuntime {
            cli: self.cli.clone(),
            name,
            network: Mutex::new(NetworkPolicy::Full),
        }))
    }
}

fn run_cli(cli: &str, args: &[String]) -> Result<String, SandboxError> {
    let out = Command::new(cli)
        .args(args)
        .stdin(Stdio::null())
        .output()
        .map_err(|e| SandboxError::Backend(format!("{cli}: {e}")))?;
    if !out.status.success() {
        return Err(SandboxError::Backend(format!(
            "{cli} {}: {}",
            args.first().map(String::as_str).unwrap_or(""),
            String::from_utf8_lossy(&out.stderr).trim()
        )));
    }
    Ok(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

#[derive(Debug)]
struct ContainerRuntime {
    cli: String,
    name: String,
    network: Mutex<NetworkPolicy>,
}

impl Runtime for ContainerRuntime {
    fn guest_workdir(&self) -> PathBuf {
        PathBuf::from(CONTAINER_WORKDIR)
    }

    fn command(
        &self,
        script: &str,
        env: &EnvVarStore,
        _policy: NetworkPolicy,
        timeout: Option<Duration>,
    ) -> Command {
        let mut cmd = Command::new(&self.cli);
        cmd.args(container_exec_args(&self.name, script, env, timeout));
        cmd
    }

    fn set_network(&self, policy: NetworkPolicy) -> Result<(), SandboxError> {
        let mut cur = self.network.lock().unwrap_or_else(|e| e.into_inner());
        if *cur == policy {
            return Ok(());
        }
        let verb = match policy {
            NetworkPolicy::Restricted => "disconnect",
            NetworkPolicy::Full => "connect",
        };
        run_cli(
            &self.cli,
            &["network".into(), verb.into(), "bridge".into(), self.name.clone()],
        )?;
        *cur = policy;
        Ok(())
    }

    fn commit(&self, tag: &str) -> Result<Option<String>, SandboxError> {
        let image = format!("cveforge-snapshot:{tag}");
        run_cli(&self.cli, &["commit".into(), self.name.clone(), image.clone()])
            .map_err(|e| SandboxError::SnapshotFailed(e.to_string()))?;
        Ok(Some(image))
    }

    fn teardown(&self) {
        let _ = run_cli(&self.cli, &["rm".into(), "-f".into(), self.name.clone()]);
    }
}

/// Backends selectable by name from configuration.
#[derive(Debug, Clone, Default)]
pub struct BackendRegistry {
    backends: BTreeMap<String, Arc<dyn SandboxBackend>>,
}

impl BackendRegistry {
    pub fn with_defaults() -> Self {
        let mut r = Self::default();
        r.register(Arc::new(LocalBackend));
        r.register(Arc::new(ContainerBackend::default()));
        r
    }

    pub fn register(&mut self, backend: Arc<dyn SandboxBackend>) {
        self.backends.insert(backend.name().to_string(), backend);
    }

    pub fn get(&self, name: &str) -> Option<Arc<dyn SandboxBackend>> {
        self.backends.get(name).cloned()
    }

    pub fn names(&self) -> Vec<String> {
        self.backends.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn container_args() {
        let run = container_run_args("cveforge-x", Path::new("/tmp/w"), "img:1");
        assert_eq!(
            run.join(" "),
            "run -d --name cveforge-x -v /tmp/w:/work -w /work img:1 sleep infinity"
        );
        let mut env = EnvVarStore::default();
        env.set("FOO", "a b").unwrap();
        let exec = container_exec_args("c", "echo hi", &env, Some(Duration::from_secs(300)));
        assert_eq!(
            exec,
            ["exec", "-w", "/work", "-e", "FOO=a b", "c", "timeout", "-s", "KILL", "300", "sh", "-c", "echo hi"]
        );
    }

    #[test]
    fn registry_lists_both() {
        assert_eq!(BackendRegistry::with_defaults().names(), ["container", "local"]);
    }
}
