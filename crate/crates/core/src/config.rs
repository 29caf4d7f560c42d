//! Run configuration: one TOML document with `caps`, `models`, `pricing`,
//! `providers`, `sandbox`, `ingest`, `run` and `scripts` sections. Secrets
//! only come from the environment.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::{ModelsConfig, Pricing};
use crate::pipeline::{Caps, DEFAULT_PARALLELISM, DEFAULT_ROUNDS};
use crate::stages::ScriptSettings;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {reason}")]
    Read { path: PathBuf, reason: String },
    #[error("invalid configuration in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeedbackCaps {
    pub builder: usize,
    pub exploiter: usize,
    pub verifier: usize,
}

impl Default for FeedbackCaps {
    fn default() -> Self {
        Self {
            builder: 1,
            exploiter: 1,
            verifier: 5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CapsConfig {
    pub budget_usd: f64,
    pub deadline_minutes: f64,
    pub tool_calls: usize,
    pub kb_tokens: u64,
    pub review_tokens: u64,
    pub feedback: FeedbackCaps,
}

impl Default for CapsConfig {
    fn default() -> Self {
        let caps = Caps::default();
        Self {
            budget_usd: caps.budget_usd,
            deadline_minutes: caps.deadline.as_secs_f64() / 60.0,
            tool_calls: caps.tool_calls,
            kb_tokens: caps.kb_tokens,
            review_tokens: caps.review_tokens,
            feedback: FeedbackCaps::default(),
        }
    }
}

impl CapsConfig {
    pub fn to_caps(&self) -> Caps {
        Caps {
            budget_usd: self.budget_usd,
            deadline: Duration::from_secs_f64(self.deadline_minutes * 60.0),
            tool_calls: self.tool_calls,
            builder_feedback: self.feedback.builder,
            exploiter_feedback: self.feedback.exploiter,
            verifier_attempts: self.feedback.verifier,
            kb_tokens: self.kb_tokens,
            review_tokens: self.review_tokens,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProviderConfig {
    /// Only `openai` (any OpenAI-compatible endpoint) is built in.
    #[serde(default = "default_kind")]
    pub kind: String,
    pub base_url: String,
}

fn default_kind() -> String {
    "openai".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SandboxConfig {
    pub backend: String,
    pub root: PathBuf,
    pub image: String,
    pub foreground_timeout_secs: u64,
    pub background_sample_secs: f64,
    pub keep: bool,
}

impl Default for SandboxConfig {
    fn default() -> Self {
        Self {
            backend: "local".into(),
            root: PathBuf::from("work/sandboxes"),
            image: "python:3.11-bookworm".into(),
            foreground_timeout_secs: 300,
            background_sample_secs: 5.0,
            keep: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// `cvelist` or `directory`.
    pub registry: String,
    pub registry_url: String,
    pub records_dir: Option<PathBuf>,
    /// `github` or `git`.
    pub repo_host: String,
    pub github_api: String,
    pub workdir: PathBuf,
    pub repo_url: Option<String>,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            registry: "cvelist".into(),
            registry_url: crate::ingest::CvelistMirror::DEFAULT_BASE.into(),
            records_dir: None,
            repo_host: "github".into(),
            github_api: "https://api.github.com".into(),
            workdir: PathBuf::from("work/bundles"),
            repo_url: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub artifacts: PathBuf,
    pub parallelism: usize,
    pub rounds: u32,
    /// Fixed flag token; normally a fresh one is drawn per attempt.
    pub flag: Option<String>,
    /// Offline world directory (see `runtime`).
    pub mock: Option<PathBuf>,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            artifacts: PathBuf::from("artifacts"),
            parallelism: DEFAULT_PARALLELISM,
            rounds: DEFAULT_ROUNDS,
            flag: None,
            mock: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub caps: CapsConfig,
    pub models: ModelsConfig,
    pub pricing: BTreeMap<String, Pricing>,
    pub providers: BTreeMap<String, ProviderConfig>,
    pub sandbox: SandboxConfig,
    pub ingest: IngestConfig,
    pub run: RunSection,
    pub scripts: ScriptSettings,
}

/// List prices in USD per 1k tokens for the default role models.
pub fn default_pricing() -> BTreeMap<String, Pricing> {
    [("o3", 0.002, 0.008), ("o4-mini", 0.0011, 0.0044), ("gpt-4o-mini", 0.00015, 0.0006)]
        .into_iter()
        .map(|(m, p, c)| {
            (
                m.to_string(),
                Pricing {
                    prompt_per_1k: p,
                    completion_per_1k: c,
                },
            )
        })
        .collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        let mut providers = BTreeMap::new();
        providers.insert(
            "openai".to_string(),
            ProviderConfig {
                kind: "openai".into(),
                base_url: "https://api.openai.com/v1".into(),
            },
        );
        Self {
            caps: CapsConfig::default(),
            models: ModelsConfig::default(),
            pricing: default_pricing(),
            providers,
            sandbox: SandboxConfig::default(),
            ingest: IngestConfig::default(),
            run: RunSection::default(),
            scripts: ScriptSettings::default(),
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub mock: Option<PathBuf>,
    pub rounds: Option<u32>,
    pub budget_usd: Option<f64>,
    pub deadline_minutes: Option<f64>,
    pub parallelism: Option<usize>,
    pub artifacts: Option<PathBuf>,
    pub repo_url: Option<String>,
    pub backend: Option<String>,
}

impl RunConfig {
    pub fn from_toml(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: origin.to_path_buf(),
            reason: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        let mut cfg = Self::from_toml(&text, path)?;
        let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ConfigError::Parse {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        cfg.rebase(&table, path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Relative paths written in a config file are relative to that file;
    /// defaults stay relative to the working directory.
    fn rebase(&mut self, table: &toml::Table, dir: &Path) {
        let set = |section: &str, key: &str| {
            table
                .get(section)
                .and_then(|s| s.as_table())
                .is_some_and(|s| s.contains_key(key))
        };
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        };
        if set("sandbox", "root") {
            fix(&mut self.sandbox.root);
        }
        if set("ingest", "workdir") {
            fix(&mut self.ingest.workdir);
        }
        if set("run", "artifacts") {
            fix(&mut self.run.artifacts);
        }
        if let Some(p) = self.ingest.records_dir.as_mut().filter(|_| set("ingest", "records_dir")) {
            fix(p);
        }
        if let Some(p) = self.run.mock.as_mut().filter(|_| set("run", "mock")) {
            fix(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_default()
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = &o.mock {
            self.run.mock = Some(v.clone());
        }
        if let Some(v) = o.rounds {
            self.run.rounds = v;
        }
        if let Some(v) = o.budget_usd {
            self.caps.budget_usd = v;
        }
        if let Some(v) = o.deadline_minutes {
            self.caps.deadline_minutes = v;
        }
        if let Some(v) = o.parallelism {
            self.run.parallelism = v;
        }
        if let Some(v) = &o.artifacts {
            self.run.artifacts = v.clone();
        }
        if let Some(v) = &o.repo_url {
            self.ingest.repo_url = Some(v.clone());
        }
        if let Some(v) = &o.backend {
            self.sandbox.backend = v.clone();
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let c = &self.caps;
        let positive = [
            ("caps.budget_usd", c.budget_usd),
            ("caps.deadline_minutes", c.deadline_minutes),
            ("caps.tool_calls", c.tool_calls as f64),
            ("caps.kb_tokens", c.kb_tokens as f64),
            ("caps.review_tokens", c.review_tokens as f64),
            ("caps.feedback.verifier", c.feedback.verifier as f64),
            ("run.parallelism", self.run.parallelism as f64),
            ("run.rounds", self.run.rounds as f64),
            ("sandbox.foreground_timeout_secs", self.sandbox.foreground_timeout_secs as f64),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.sandbox.background_sample_secs.is_finite() && self.sandbox.background_sample_secs >= 0.0) {
            return Err(ConfigError::Invalid("sandbox.background_sample_secs must be non-negative".into()));
        }
        for (model, p) in &self.pricing {
            if p.prompt_per_1k < 0.0 || p.completion_per_1k < 0.0 {
                return Err(ConfigError::Invalid(format!("negative price for {model}")));
            }
        }
        if let Some(flag) = &self.run.flag {
            if flag.len() < 8 || !flag.chars().all(|ch| ch.is_ascii_alphanumeric()) {
                return Err(ConfigError::Invalid(
                    "run.flag must be at least 8 alphanumeric characters".into(),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_documented_caps() {
        let c = RunConfig::default();
        assert_eq!(c.caps.budget_usd, 5.0);
        assert_eq!(c.caps.deadline_minutes, 45.0);
        assert_eq!(c.caps.tool_calls, 60);
        assert_eq!(c.caps.feedback, FeedbackCaps { builder: 1, exploiter: 1, verifier: 5 });
        assert_eq!(c.run.rounds, 3);
        assert_eq!(c.run.parallelism, 4);
        assert_eq!(c.caps.to_caps().deadline, Duration::from_secs(2700));
        c.validate().unwrap();
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml(), Path::new("x")).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let text = r#"
[caps]
budget_usd = 2.5
[caps.feedback]
builder = 3
[models.exploit_developer]
model = "o4-mini"
"#;
        let c = RunConfig::from_toml(text, Path::new("x")).unwrap();
        assert_eq!(c.caps.budget_usd, 2.5);
        assert_eq!(c.caps.deadline_minutes, 45.0);
        assert_eq!(c.caps.feedback.builder, 3);
        assert_eq!(c.caps.feedback.verifier, 5);
        assert_eq!(c.models.roles["exploit_developer"].model.as_deref(), Some("o4-mini"));
        assert!(c.pricing.contains_key("o3"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[caps]\nbudget = 1.0\n", Path::new("x")).is_err());
    }

    #[test]
    fn flags_win_over_file() {
        let mut c = RunConfig::from_toml(
            "[caps]\nbudget_usd = 2.0\ndeadline_minutes = 10\n[run]\nrounds = 2\nparallelism = 8\n",
            Path::new("x"),
        )
        .unwrap();
        c.apply(&Overrides {
            budget_usd: Some(0.01),
            rounds: Some(7),
            parallelism: Some(1),
            repo_url: Some("https://github.com/o/r".into()),
            ..Default::default()
        });
        assert_eq!(c.caps.budget_usd, 0.01);
        assert_eq!(c.caps.deadline_minutes, 10.0);
        assert_eq!(c.run.rounds, 7);
        assert_eq!(c.run.parallelism, 1);
        assert_eq!(c.ingest.repo_url.as_deref(), Some("https://github.com/o/r"));
    }

    #[test]
    fn validation_rejects_non_positive_caps() {
        let mut c = RunConfig::default();
        c.caps.budget_usd = 0.0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.run.parallelism = 0;
        assert!(c.validate().is_err());
        let mut c = RunConfig::default();
        c.run.flag = Some("short".into());
        assert!(c.validate().is_err());
    }

    #[test]
    fn load_rebases_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.toml");
        std::fs::write(&path, "[run]\nartifacts = \"out\"\n").unwrap();
        let c = RunConfig::load(&path).unwrap();
        assert_eq!(c.run.artifacts, dir.path().join("out"));
        assert_eq!(c.sandbox.root, RunConfig::default().sandbox.root);
    }
}
