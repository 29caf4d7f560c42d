//! End-to-end reproduction of one CVE, batch rounds, and reports.

mod batch;
mod report;
mod state;

use std::fmt::Debug;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

pub use batch::{batch_run, BatchOptions, BatchRecord, BatchReport, RoundSummary, DEFAULT_PARALLELISM, DEFAULT_ROUNDS};
pub use report::{render_attempt, AttemptRecord};
pub use state::{AbortCause, PipelineState, Stage, StateError, Status};

use crate::agent::{AgentEnv, AgentTranscript, DEFAULT_MAX_TOOL_CALLS, DEFAULT_REVIEW_TOKENS};
use crate::digest::file_digest;
use crate::ingest::{CveId, Ingestor, RawCveBundle};
use crate::llm::{Budget, Gateway};
use crate::sandbox::{SandboxFactory, SandboxHandle, ToolRegistry, LOG_SUBDIR};
use crate::stages::builder::run_builder;
use crate::stages::exploiter::run_exploiter;
use crate::stages::knowledge::{build_knowledge_base, DEFAULT_KB_TOKENS};
use crate::stages::verifier::{generate_flag, run_verifier, VerifierLimits};
use crate::stages::{FailureKind, ScriptSettings, StageFailure};
use crate::store::{ArtifactStore, RunDir, RunMetadata, KB_FILE, SNAPSHOT_REF};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Caps {
    pub budget_usd: f64,
    pub deadline: Duration,
    pub tool_calls: usize,
    pub builder_feedback: usize,
    pub exploiter_feedback: usize,
    pub verifier_attempts: usize,
    pub kb_tokens: u64,
    pub review_tokens: u64,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            budget_usd: 5.0,
            deadline: Duration::from_secs(45 * 60),
            tool_calls: DEFAULT_MAX_TOOL_CALLS,
            builder_feedback: 1,
            exploiter_feedback: 1,
            verifier_attempts: 5,
            kb_tokens: DEFAULT_KB_TOKENS,
            review_tokens: DEFAULT_REVIEW_TOKENS,
        }
    }
}

/// Supplies the gateway for one attempt. Live runs share one gateway;
/// scripted runs load the script for the CVE and round.
pub trait GatewayFactory: Send + Sync + Debug {
    fn gateway(&self, cve_id: &str, round: u32) -> Result<Gateway, String>;
}

#[derive(Debug, Clone)]
pub struct SharedGateway(pub Gateway);

impl GatewayFactory for SharedGateway {
    fn gateway(&self, _cve_id: &str, _round: u32) -> Result<Gateway, String> {
        Ok(self.0.clone())
    }
}

#[derive(Debug, Clone)]
pub struct Pipeline {
    pub ingestor: Ingestor,
    pub gateways: Arc<dyn GatewayFactory>,
    pub tools: ToolRegistry,
    pub sandboxes: SandboxFactory,
    pub store: ArtifactStore,
    pub caps: Caps,
    pub scripts: ScriptSettings,
    /// Fixed flag instead of a fresh random one per attempt.
    pub pinned_flag: Option<String>,
    /// Keep sandbox directories after the attempt (debugging).
    pub keep_sandboxes: bool,
}

impl Debug for Ingestor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Ingestor")
            .field("registry", &self.registry.name())
            .field("repo_host", &self.repo_host.name())
            .field("workdir", &self.workdir)
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct AttemptResult {
    pub state: PipelineState,
    pub metadata: RunMetadata,
    pub run_dir: Option<PathBuf>,
}

impl AttemptResult {
    pub fn reproduced(&self) -> bool {
        *self.state.status() == Status::Reproduced
    }
}

/// Collects everything that ends up in `metadata.json`.
struct Attempt<'a> {
    state: PipelineState,
    meta: RunMetadata,
    run: Option<RunDir>,
    budget: &'a Budget,
}

impl Attempt<'_> {
    fn fail(&mut self, f: StageFailure) {
        tracing::info!(cve = %self.state.cve_id, stage = %self.state.stage(), failure = %f, "attempt failed");
        let _ = self.state.fail(f);
    }

    fn enter(&mut self, stage: Stage) -> bool {
        if let Err(hit) = self.budget.check() {
            let kind = match hit {
                crate::llm::LimitHit::Budget => FailureKind::Budget,
                crate::llm::LimitHit::Deadline => FailureKind::Timeout,
            };
            self.fail(StageFailure::new(kind, format!("{hit:?} limit reached before {stage}").to_lowercase()));
            return false;
        }
        self.state.enter(stage).is_ok()
    }

    fn transcripts(&mut self, stage: Stage, ts: &[AgentTranscript]) {
        let Some(run) = &self.run else { return };
        for t in ts {
            match run.write_transcript(stage.as_str(), t) {
                Ok(entry) => self.meta.transcripts.push(entry),
                Err(e) => tracing::warn!(error = %e, "could not persist transcript"),
            }
        }
    }

    fn write_json<T: Serialize>(&mut self, rel: &str, v: &T) -> bool {
        match &self.run {
            Some(run) => match run.write_json(rel, v) {
                Ok(_) => true,
                Err(e) => {
                    self.fail(StageFailure::new(FailureKind::Infrastructure, e.to_string()));
                    false
                }
            },
            None => false,
        }
    }
}

impl Pipeline {
    pub fn reproduce(&self, cve: &str, round: u32) -> AttemptResult {
        let budget = Budget::new(self.caps.budget_usd, self.caps.deadline);
        let mut a = Attempt {
            state: PipelineState::new(cve, budget.ledger.clone(), budget.deadline),
            meta: RunMetadata {
                cve_id: cve.to_string(),
                run: 0,
                round,
                status: String::new(),
                stage: String::new(),
                failure_kind: None,
                failure_reason: None,
                cost_usd: 0.0,
                seconds: 0.0,
                sandbox_id: None,
                snapshot_ref: None,
                exploit_path: None,
                verifier_path: None,
                kb_path: None,
                bundle_digest: None,
                bundle_intact: None,
                flag_token: None,
                trace: Vec::new(),
                transcripts: Vec::new(),
                usage: Vec::new(),
            },
            run: None,
            budget: &budget,
        };
        let mut sandbox = None;
        let mut bundle = None;
        self.run_stages(&mut a, round, &mut sandbox, &mut bundle);
        if let Some(sb) = sandbox.take() {
            self.release(sb, a.run.as_ref());
        }
        // The source tree handed to the sandbox is a copy; the bundle must be untouched.
        if let Some(bundle) = &bundle {
            a.meta.bundle_intact = bundle.verify_integrity().ok();
        }
        a.meta.cost_usd = budget.ledger.total_cost();
        a.meta.usage = budget.ledger.entries();
        a.meta.seconds = a.state.started_at.elapsed().as_secs_f64();
        a.meta.status = a.state.status().label().to_string();
        a.meta.stage = a.state.stage().to_string();
        a.meta.failure_kind = a.state.failure_kind();
        a.meta.failure_reason = a.state.failure_reason().map(String::from);
        a.meta.trace = a.state.trace().to_vec();
        if let Some(run) = &a.run {
            if let Err(e) = run.write_json(crate::store::METADATA, &a.meta) {
                tracing::error!(error = %e, "could not write metadata");
            }
        }
        AttemptResult {
            run_dir: a.run.as_ref().map(|r| r.path.clone()),
            state: a.state,
            metadata: a.meta,
        }
    }

    fn release(&self, sb: SandboxHandle, run: Option<&RunDir>) {
        if let Some(run) = run {
            let logs = sb.workdir().join(LOG_SUBDIR);
            if logs.is_dir() {
                let _ = crate::fsutil::copy_dir(&logs, &run.path.join("logs"));
            }
        }
        sb.teardown();
        let dir = sb.workdir().parent().map(PathBuf::from);
        drop(sb);
        if !self.keep_sandboxes {
            if let Some(dir) = dir {
                let _ = std::fs::remove_dir_all(dir);
            }
        }
    }

    fn run_stages(
        &self,
        a: &mut Attempt<'_>,
        round: u32,
        sandbox_slot: &mut Option<SandboxHandle>,
        bundle_slot: &mut Option<RawCveBundle>,
    ) {
        let id: CveId = match a.state.cve_id.parse() {
            Ok(id) => id,
            Err(e) => return a.fail(StageFailure::new(FailureKind::IngestError, format!("{e}"))),
        };
        match self.store.begin_run(id.as_str()) {
            Ok(run) => {
                a.meta.run = run.index;
                a.run = Some(run);
            }
            Err(e) => return a.fail(StageFailure::new(FailureKind::Infrastructure, e.to_string())),
        }

        let bundle: &RawCveBundle = match self.ingestor.ingest(&id) {
            Ok(b) => bundle_slot.insert(b),
            Err(e) => return a.fail(StageFailure::new(FailureKind::IngestError, e.to_string())),
        };
        a.meta.bundle_digest = Some(bundle.digest().to_string());
        let gateway = match self.gateways.gateway(id.as_str(), round) {
            Ok(g) => g,
            Err(e) => return a.fail(StageFailure::new(FailureKind::Infrastructure, e)),
        };
        let sb = match self.sandboxes.create(Some(&bundle.source().root_path)) {
            Ok(sb) => sb,
            Err(e) => return a.fail(StageFailure::new(FailureKind::Infrastructure, e.to_string())),
        };
        sb.set_deadline(Some(a.budget.deadline));
        a.meta.sandbox_id = Some(sb.id().to_string());
        let sandbox: &SandboxHandle = sandbox_slot.insert(sb);
        let env = AgentEnv {
            gateway: &gateway,
            tools: &self.tools,
            budget: a.budget,
            sandbox,
            review_tokens: self.caps.review_tokens,
            tool_call_cap: self.caps.tool_calls,
        };

        if !a.enter(Stage::Knowledge) {
            return;
        }
        let kb_out = build_knowledge_base(env, bundle, self.caps.kb_tokens);
        a.transcripts(Stage::Knowledge, &kb_out.transcripts);
        let kb = match kb_out.result {
            Ok(kb) => kb,
            Err(f) => return a.fail(f),
        };
        let kb_json = kb.to_json();
        if !a.write_json(KB_FILE, &kb) {
            return;
        }
        a.meta.kb_path = Some(KB_FILE.into());

        if !a.enter(Stage::Builder) {
            return;
        }
        let (plan, built) = run_builder(env, &kb_json, &bundle.source().directory_tree, self.caps.builder_feedback);
        a.transcripts(Stage::Builder, &built.transcripts);
        if let Some(plan) = &plan {
            a.write_json("builder/plan.json", plan);
        }
        let built = match built.result {
            Ok(b) => b,
            Err(f) => return a.fail(f),
        };
        a.write_json("builder/setup_report.json", &built.setup);

        if !a.enter(Stage::Exploiter) {
            return;
        }
        let exploited = run_exploiter(env, &kb_json, &built.setup.render(), &self.scripts, self.caps.exploiter_feedback);
        a.transcripts(Stage::Exploiter, &exploited.transcripts);
        let exploit = match exploited.result {
            Ok(e) => e,
            Err(f) => return a.fail(f),
        };
        a.write_json("exploiter/report.json", &exploit);

        if !a.enter(Stage::Verifier) {
            return;
        }
        let flag = self.pinned_flag.clone().unwrap_or_else(generate_flag);
        a.meta.flag_token = Some(flag.clone());
        let limits = VerifierLimits {
            flag_checks: self.caps.verifier_attempts,
            critic_reviews: self.caps.verifier_attempts,
        };
        let verified = run_verifier(env, &kb_json, &exploit, &flag, &self.scripts, limits);
        a.transcripts(Stage::Verifier, &verified.output.transcripts);
        a.write_json("verifier/checks.json", &verified.checks);
        let verifier = match verified.output.result {
            Ok(v) => v,
            Err(f) => return a.fail(f),
        };

        if !a.enter(Stage::Stored) {
            return;
        }
        let snapshot = match sandbox.snapshot() {
            Ok(s) => s,
            Err(e) => return a.fail(StageFailure::new(FailureKind::Infrastructure, e.to_string())),
        };
        a.meta.snapshot_ref = Some(snapshot.0.clone());
        let Some(run) = a.run.clone() else { return };
        let exploit_file = self.scripts.exploit_file();
        let verifier_file = self.scripts.verifier_file();
        let exploit_text = std::fs::read(sandbox.workdir().join(&exploit_file));
        let stored = exploit_text
            .map_err(|e| e.to_string())
            .and_then(|bytes| run.write(&exploit_file, &bytes).map_err(|e| e.to_string()))
            .and_then(|_| run.write(&verifier_file, verifier.script_text.as_bytes()).map_err(|e| e.to_string()))
            .and_then(|_| run.write(SNAPSHOT_REF, format!("{snapshot}\n").as_bytes()).map_err(|e| e.to_string()));
        if let Err(e) = stored {
            return a.fail(StageFailure::new(FailureKind::Infrastructure, e));
        }
        if file_digest(&run.path.join(&exploit_file)).ok().as_deref() != Some(exploit.script_digest.as_str()) {
            tracing::warn!("stored exploit differs from the accepted report");
        }
        a.meta.exploit_path = Some(exploit_file);
        a.meta.verifier_path = Some(verifier_file);
        let _ = a.state.reproduced();
    }
}
