//! Builds a [`Pipeline`] from a [`RunConfig`], either against live services
//! or against an offline world directory:
//!
//! ```text
//! <world>/records/<CVE>.json            registry records (cvelist JSON 5)
//! <world>/repos/<owner>/<name>/...       tags and commits for the fixture host
//! <world>/web/index.json                 url -> page file for advisories
//! <world>/llm/[<CVE>/[round-<n>/]]<role>.json   scripted model turns
//! <world>/shims/                         put first on PATH inside sandboxes
//! <world>/cveforge.toml                  optional config used with --mock
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use thiserror::Error;

use crate::config::{ConfigError, Overrides, RunConfig};
use crate::ingest::{
    CveRegistry, CvelistMirror, FixtureFetcher, FixtureRegistry, FixtureRepoHost, GitCli, GitHubApi,
    HttpFetcher, Ingestor, RepoHost, RepoLocator, WebFetcher,
};
use crate::llm::{
    load_role_bindings, ChatProvider, Gateway, MockProvider, ModelsConfig, OpenAiCompatible,
    ProviderRegistry, RoleBindings, RoleName, RoleOverride,
};
use crate::net::HttpClient;
use crate::pipeline::{GatewayFactory, Pipeline, SharedGateway};
use crate::sandbox::{BackendRegistry, SandboxFactory, SandboxSettings, ToolRegistry};
use crate::store::ArtifactStore;

pub const WORLD_CONFIG: &str = "cveforge.toml";
pub const MOCK_PROVIDER: &str = "mock";

#[derive(Debug, Error)]
pub enum RuntimeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Setup(String),
}

/// Config file (or the world's own `cveforge.toml` when only `--mock` is
/// given, or defaults), then flag overrides, then validation.
pub fn resolve_config(path: Option<&Path>, overrides: &Overrides) -> Result<RunConfig, ConfigError> {
    let world_cfg = overrides.mock.as_ref().map(|w| w.join(WORLD_CONFIG)).filter(|p| p.is_file());
    let mut cfg = match (path, world_cfg) {
        (Some(p), _) => RunConfig::load(p)?,
        (None, Some(p)) => RunConfig::load(&p)?,
        (None, None) => RunConfig::default(),
    };
    cfg.apply(overrides);
    cfg.validate()?;
    Ok(cfg)
}

/// Directory layout of an offline world.
#[derive(Debug, Clone)]
pub struct World {
    pub root: PathBuf,
}

impl World {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn records(&self) -> PathBuf {
        self.root.join("records")
    }

    pub fn repos(&self) -> PathBuf {
        self.root.join("repos")
    }

    pub fn web(&self) -> PathBuf {
        self.root.join("web")
    }

    pub fn llm(&self) -> PathBuf {
        self.root.join("llm")
    }

    pub fn shims(&self) -> PathBuf {
        self.root.join("shims")
    }

    /// Script directories for one attempt, most specific first.
    pub fn script_layers(&self, cve_id: &str, round: u32) -> Vec<PathBuf> {
        let base = self.llm();
        [base.join(cve_id).join(format!("round-{round}")), base.join(cve_id), base]
            .into_iter()
            .filter(|p| p.is_dir())
            .collect()
    }
}

/// Fresh scripted provider per attempt, loaded from the world's `llm/` tree.
#[derive(Debug, Clone)]
pub struct ScriptedGateways {
    pub world: World,
    pub bindings: RoleBindings,
}

impl GatewayFactory for ScriptedGateways {
    fn gateway(&self, cve_id: &str, round: u32) -> Result<Gateway, String> {
        let layers = self.world.script_layers(cve_id, round);
        let refs: Vec<&Path> = layers.iter().map(PathBuf::as_path).collect();
        let mock = MockProvider::load_layered(&refs).map_err(|e| format!("loading model scripts: {e}"))?;
        let providers = ProviderRegistry::new().with(MOCK_PROVIDER, Arc::new(mock) as Arc<dyn ChatProvider>);
        Ok(Gateway::new(providers, self.bindings.clone()).with_retry_base(Duration::ZERO))
    }
}

/// Every role served by the scripted provider, keeping configured model ids
/// so pricing still applies.
pub fn mock_models(models: &ModelsConfig) -> ModelsConfig {
    let mut out = models.clone();
    for role in RoleName::ALL {
        let entry = out.roles.entry(role.to_string()).or_insert(RoleOverride {
            provider: None,
            model: None,
        });
        entry.provider = Some(MOCK_PROVIDER.into());
    }
    out
}

/// Role bindings of an offline run: configured models, scripted provider.
pub fn offline_bindings(cfg: &RunConfig) -> Result<RoleBindings, RuntimeError> {
    let check = ProviderRegistry::new().with(MOCK_PROVIDER, Arc::new(MockProvider::new()) as Arc<dyn ChatProvider>);
    load_role_bindings(&mock_models(&cfg.models), &cfg.pricing, &check).map_err(|e| RuntimeError::Setup(e.to_string()))
}

fn sandbox_factory(cfg: &RunConfig, world: Option<&World>) -> Result<SandboxFactory, RuntimeError> {
    let backend = BackendRegistry::with_defaults().get(&cfg.sandbox.backend).ok_or_else(|| {
        RuntimeError::Setup(format!(
            "unknown sandbox backend {:?} (available: {})",
            cfg.sandbox.backend,
            BackendRegistry::with_defaults().names().join(", ")
        ))
    })?;
    let mut settings = SandboxSettings::new(&cfg.sandbox.root);
    settings.foreground_timeout = Duration::from_secs(cfg.sandbox.foreground_timeout_secs);
    settings.background_sample = Duration::from_secs_f64(cfg.sandbox.background_sample_secs);
    settings.image = cfg.sandbox.image.clone();
    if let Some(shims) = world.map(World::shims).filter(|p| p.is_dir()) {
        let shims = shims.canonicalize().unwrap_or(shims);
        settings.path_prefix.push(shims);
    }
    Ok(SandboxFactory::new(backend, settings))
}

fn repo_override(cfg: &RunConfig) -> Result<Option<RepoLocator>, RuntimeError> {
    cfg.ingest
        .repo_url
        .as_deref()
        .map(|u| RepoLocator::parse_url(u).ok_or_else(|| RuntimeError::Setup(format!("unrecognized repository URL {u:?}"))))
        .transpose()
}

pub fn build_pipeline(cfg: &RunConfig) -> Result<Pipeline, RuntimeError> {
    cfg.validate()?;
    match &cfg.run.mock {
        Some(root) => build_offline(cfg, &World::new(root.clone())),
        None => build_live(cfg),
    }
}

fn build_offline(cfg: &RunConfig, world: &World) -> Result<Pipeline, RuntimeError> {
    if !world.root.is_dir() {
        return Err(RuntimeError::Setup(format!("mock world {} does not exist", world.root.display())));
    }
    let fetcher = FixtureFetcher::load(world.web())
        .map_err(|e| RuntimeError::Setup(format!("loading web fixtures: {e}")))?;
    let bindings = offline_bindings(cfg)?;
    Ok(Pipeline {
        ingestor: Ingestor {
            registry: Arc::new(FixtureRegistry::new(world.records())),
            repo_host: Arc::new(FixtureRepoHost::new(world.repos())),
            fetcher: Arc::new(fetcher),
            workdir: cfg.ingest.workdir.clone(),
            repo_override: repo_override(cfg)?,
        },
        gateways: Arc::new(ScriptedGateways {
            world: world.clone(),
            bindings,
        }),
        tools: ToolRegistry::standard(),
        sandboxes: sandbox_factory(cfg, Some(world))?,
        store: ArtifactStore::new(&cfg.run.artifacts),
        caps: cfg.caps.to_caps(),
        scripts: cfg.scripts.clone(),
        pinned_flag: cfg.run.flag.clone(),
        keep_sandboxes: cfg.sandbox.keep,
    })
}

fn build_live(cfg: &RunConfig) -> Result<Pipeline, RuntimeError> {
    let client = HttpClient::default();
    let mut providers = ProviderRegistry::new();
    for (name, p) in &cfg.providers {
        match p.kind.as_str() {
            "openai" => providers.register(
                name.clone(),
                Arc::new(OpenAiCompatible::from_env(name, &p.base_url, client.clone())),
            ),
            other => return Err(RuntimeError::Setup(format!("provider {name}: unknown kind {other:?}"))),
        }
    }
    let bindings =
        load_role_bindings(&cfg.models, &cfg.pricing, &providers).map_err(|e| RuntimeError::Setup(e.to_string()))?;
    let registry: Arc<dyn CveRegistry> = match cfg.ingest.registry.as_str() {
        "cvelist" => Arc::new(CvelistMirror::new(&cfg.ingest.registry_url, client.clone())),
        "directory" => {
            let dir = cfg
                .ingest
                .records_dir
                .clone()
                .ok_or_else(|| RuntimeError::Setup("ingest.records_dir is required for the directory registry".into()))?;
            Arc::new(FixtureRegistry::new(dir))
        }
        other => return Err(RuntimeError::Setup(format!("unknown registry {other:?}"))),
    };
    let repo_host: Arc<dyn RepoHost> = match cfg.ingest.repo_host.as_str() {
        "github" => {
            let token = std::env::var("CVEFORGE_GITHUB_TOKEN").ok().filter(|t| !t.is_empty());
            Arc::new(GitHubApi::new(&cfg.ingest.github_api, token, client.clone()))
        }
        "git" => Arc::new(GitCli::default()),
        other => return Err(RuntimeError::Setup(format!("unknown repository host {other:?}"))),
    };
    let fetcher: Arc<dyn WebFetcher> = Arc::new(HttpFetcher::new(client));
    Ok(Pipeline {
        ingestor: Ingestor {
            registry,
            repo_host,
            fetcher,
            workdir: cfg.ingest.workdir.clone(),
            repo_override: repo_override(cfg)?,
        },
        gateways: Arc::new(SharedGateway(Gateway::new(providers, bindings))),
        tools: ToolRegistry::standard(),
        sandboxes: sandbox_factory(cfg, None)?,
        store: ArtifactStore::new(&cfg.run.artifacts),
        caps: cfg.caps.to_caps(),
        scripts: cfg.scripts.clone(),
        pinned_flag: cfg.run.flag.clone(),
        keep_sandboxes: cfg.sandbox.keep,
    })
}
