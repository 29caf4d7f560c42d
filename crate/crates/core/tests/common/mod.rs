//! Helpers shared by the pipeline-level integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

pub mod oracle;

use cveforge_core::config::{Overrides, RunConfig};
use cveforge_core::llm::{ChatProvider, Gateway, MockProvider, Pricing, ProviderRegistry, RoleName};
use cveforge_core::pipeline::{Pipeline, SharedGateway};
use cveforge_core::runtime::{build_pipeline, offline_bindings, resolve_config, MOCK_PROVIDER};
use serde_json::Value;
use tempfile::TempDir;

pub const GOLDEN_CVE: &str = "CVE-2024-4340";
pub const FLAG: &str = "3xploit66full";

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

/// World config with every writable path moved under `scratch`.
pub fn offline_config(world: &Path, scratch: &Path) -> RunConfig {
    let mut cfg = resolve_config(
        None,
        &Overrides {
            mock: Some(world.to_path_buf()),
            ..Default::default()
        },
    )
    .unwrap();
    cfg.run.artifacts = scratch.join("artifacts");
    cfg.sandbox.root = scratch.join("sandboxes");
    cfg.ingest.workdir = scratch.join("bundles");
    cfg
}

/// Scripted turns of the golden world for one role.
pub fn golden_turns(role: RoleName) -> Vec<Value> {
    let path = fixture("golden").join("llm").join(format!("{role}.json"));
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).unwrap(),
        Err(_) => Vec::new(),
    }
}

/// A pipeline over `world` whose model turns come from one shared mock:
/// `overrides` replace whole role scripts, other roles use the world's.
pub struct Scripted {
    pub pipeline: Pipeline,
    pub mock: Arc<MockProvider>,
    pub scratch: TempDir,
    _scripts: TempDir,
}

pub fn scripted(world: &Path, overrides: &[(RoleName, Vec<Value>)], tweak: impl FnOnce(&mut RunConfig)) -> Scripted {
    let scratch = tempfile::tempdir().unwrap();
    let mut cfg = offline_config(world, scratch.path());
    tweak(&mut cfg);
    let scripts = tempfile::tempdir().unwrap();
    for (role, turns) in overrides {
        std::fs::write(
            scripts.path().join(format!("{role}.json")),
            serde_json::to_string(turns).unwrap(),
        )
        .unwrap();
    }
    let llm = world.join("llm");
    let mock = Arc::new(MockProvider::load_layered(&[scripts.path(), &llm]).unwrap());
    let providers = ProviderRegistry::new().with(MOCK_PROVIDER, mock.clone() as Arc<dyn ChatProvider>);
    let gateway = Gateway::new(providers, offline_bindings(&cfg).unwrap()).with_retry_base(Duration::ZERO);
    let mut pipeline = build_pipeline(&cfg).unwrap();
    pipeline.gateways = Arc::new(SharedGateway(gateway));
    Scripted {
        pipeline,
        mock,
        scratch,
        _scripts: scripts,
    }
}

/// Golden script for `role` with every turn's usage pinned.
pub fn with_usage(role: RoleName, prompt: u64, completion: u64) -> Vec<Value> {
    golden_turns(role)
        .into_iter()
        .map(|mut t| {
            t["usage"] = serde_json::json!({"prompt_tokens": prompt, "completion_tokens": completion});
            t
        })
        .collect()
}

pub fn with_delay(role: RoleName, ms: u64) -> Vec<Value> {
    golden_turns(role)
        .into_iter()
        .map(|mut t| {
            t["delay_ms"] = serde_json::json!(ms);
            t
        })
        .collect()
}

pub fn flat_pricing(cfg: &mut RunConfig, per_1k_completion: f64) {
    for p in cfg.pricing.values_mut() {
        *p = Pricing {
            prompt_per_1k: 0.0,
            completion_per_1k: per_1k_completion,
        };
    }
}

pub fn answer(v: Value) -> Value {
    serde_json::json!({ "answer": v })
}

pub fn critique(accepted: bool, text: &str) -> Value {
    answer(serde_json::json!({"analysis": text, "accepted": accepted, "feedback": if accepted { "" } else { text }}))
}

pub fn verifier_answer(script: &str) -> Value {
    answer(serde_json::json!({
        "script": script,
        "pre_setup": "pre_setup",
        "exploit_execution": "run_exploit",
        "post_setup": "post_setup",
    }))
}

/// The robust verifier the golden world ends with.
pub fn robust_verifier() -> Value {
    golden_turns(RoleName::VerifierDeveloper).pop().unwrap()
}

pub fn agents_run(meta: &cveforge_core::store::RunMetadata, agent: &str) -> usize {
    meta.transcripts.iter().filter(|t| t.agent == agent).count()
}
