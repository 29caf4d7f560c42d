use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{prompts, FailureKind, StageFailure, StageOutput};
use crate::agent::{run_agent, run_dev_critic_cycle, AgentEnv, AgentOutcome, AgentSpec, ContextBlocks, CycleRequest};
use crate::llm::{FieldKind, FieldSpec, OutputSchema, RoleName};
use crate::sandbox::{GET_FILE, LINUX_COMMAND, LS_COMMAND, SET_ENV, WRITE_FILE};

pub const READ_ONLY_TOOLS: &[&str] = &[GET_FILE, LS_COMMAND];
pub const FULL_TOOLS: &[&str] = &[GET_FILE, WRITE_FILE, LS_COMMAND, LINUX_COMMAND, SET_ENV];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportantFile {
    pub path: String,
    pub note: String,
    pub exists: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreReqPlan {
    pub overview: String,
    pub important_files: Vec<ImportantFile>,
    pub required_services: String,
    pub expected_state: String,
    pub warnings: Vec<String>,
}

impl PreReqPlan {
    pub fn render(&self) -> String {
        let mut out = format!("Overview: {}\n\nImportant files:\n", self.overview);
        for f in &self.important_files {
            let flag = if f.exists { "" } else { " (not found in the source tree)" };
            out.push_str(&format!("- {}{flag}: {}\n", f.path, f.note));
        }
        out.push_str(&format!(
            "\nRequired services: {}\n\nExpected state: {}",
            self.required_services, self.expected_state
        ));
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetupReport {
    pub success: bool,
    pub access_instructions: String,
    pub setup_summary: String,
    pub check_command: String,
    pub check_output: String,
}

impl SetupReport {
    pub fn render(&self) -> String {
        format!(
            "Setup summary: {}\n\nAccess instructions: {}\n\nReadiness check: `{}`\n{}",
            self.setup_summary, self.access_instructions, self.check_command, self.check_output
        )
    }
}

pub fn plan_schema() -> OutputSchema {
    OutputSchema::new(
        "prerequisite_plan",
        vec![
            FieldSpec::required("overview", FieldKind::Text, "what the project is"),
            FieldSpec::required(
                "important_files",
                FieldKind::ObjectList(vec![
                    FieldSpec::required("path", FieldKind::Text, "path relative to the project root"),
                    FieldSpec::optional("note", FieldKind::Text, "why it matters"),
                ]),
                "files relevant to setup and to the vulnerability",
            ),
            FieldSpec::required("required_services", FieldKind::Text, "services, runtimes and configuration needed"),
            FieldSpec::required("expected_state", FieldKind::Text, "testable description of the set-up project"),
        ],
    )
}

pub fn setup_schema() -> OutputSchema {
    OutputSchema::new(
        "setup_report",
        vec![
            FieldSpec::required("success", FieldKind::Bool, "whether the expected state was reached"),
            FieldSpec::optional("access_instructions", FieldKind::Text, "how another engineer reaches the project (commands, ports, paths)"),
            FieldSpec::required("setup_summary", FieldKind::Text, "what you did"),
            FieldSpec::optional("check_command", FieldKind::Text, "the readiness check you ran"),
            FieldSpec::optional("check_output", FieldKind::Text, "its output"),
        ],
    )
    .with_decision("success")
}

fn text(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or("").trim().to_string()
}

/// Validates a plan answer; listed files are checked against the sandbox.
pub fn parse_plan(v: &Value, file_exists: impl Fn(&str) -> bool) -> Result<PreReqPlan, String> {
    let mut plan = PreReqPlan {
        overview: text(v, "overview"),
        important_files: Vec::new(),
        required_services: text(v, "required_services"),
        expected_state: text(v, "expected_state"),
        warnings: Vec::new(),
    };
    for f in v.get("important_files").and_then(Value::as_array).into_iter().flatten() {
        let path = text(f, "path");
        let exists = file_exists(&path);
        if !exists {
            plan.warnings.push(format!("important file {path:?} does not exist in the source tree"));
        }
        plan.important_files.push(ImportantFile {
            note: text(f, "note"),
            path,
            exists,
        });
    }
    for (name, empty) in [
        ("overview", plan.overview.is_empty()),
        ("important_files", plan.important_files.is_empty()),
        ("required_services", plan.required_services.is_empty()),
        ("expected_state", plan.expected_state.is_empty()),
    ] {
        if empty {
            return Err(format!("plan field `{name}` is empty"));
        }
    }
    Ok(plan)
}

pub fn parse_setup(v: &Value) -> SetupReport {
    SetupReport {
        success: v.get("success").and_then(Value::as_bool).unwrap_or(false),
        access_instructions: text(v, "access_instructions"),
        setup_summary: text(v, "setup_summary"),
        check_command: text(v, "check_command"),
        check_output: text(v, "check_output"),
    }
}

pub fn plan_prerequisites(env: AgentEnv<'_>, kb_json: &str, tree: &str) -> StageOutput<PreReqPlan> {
    let spec = AgentSpec::read_only(RoleName::PrereqDeveloper, prompts::PREREQ_DEVELOPER, READ_ONLY_TOOLS, plan_schema());
    let ctx = ContextBlocks::with_kb(kb_json).input("Project directory tree", tree);
    let run = run_agent(env, &spec, &ctx);
    let transcripts = vec![run.transcript.clone()];
    let result = match (run.outcome, &run.answer) {
        (AgentOutcome::FinalAnswer, Some(a)) => parse_plan(a, |p| {
            env.sandbox.resolve(p).map(|full| full.exists()).unwrap_or(false)
        })
        .map_err(|e| StageFailure::new(FailureKind::FormatError, e)),
        (outcome, _) => Err(StageFailure::from_outcome(outcome, FailureKind::BuildFailure, run.transcript.error())),
    };
    StageOutput { result, transcripts }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BuilderResult {
    pub plan: PreReqPlan,
    pub setup: SetupReport,
}

/// Plan, then the setup developer/critic cycle. Feedback reruns only the
/// setup developer.
pub fn run_builder(env: AgentEnv<'_>, kb_json: &str, tree: &str, max_feedback: usize) -> (Option<PreReqPlan>, StageOutput<BuilderResult>) {
    let planned = plan_prerequisites(env, kb_json, tree);
    let mut transcripts = planned.transcripts;
    let plan = match planned.result {
        Ok(p) => p,
        Err(e) => return (None, StageOutput { result: Err(e), transcripts }),
    };

    let dev = AgentSpec::developer(RoleName::SetupDeveloper, prompts::SETUP_DEVELOPER, FULL_TOOLS, setup_schema());
    let critic = AgentSpec::critic(RoleName::SetupCritic, prompts::SETUP_CRITIC);
    let audit = |v: &Value| {
        let r = parse_setup(v);
        if r.success && r.access_instructions.is_empty() {
            Err("The setup report claims success but gives no access instructions. Explain how another engineer reaches the project.".to_string())
        } else {
            Ok(())
        }
    };
    let cycle = run_dev_critic_cycle(
        env,
        CycleRequest {
            developer: &dev,
            critic: &critic,
            context: ContextBlocks::with_kb(kb_json).input("Setup plan", plan.render()),
            critic_context: ContextBlocks::with_kb(kb_json).input("Setup plan", plan.render()),
            max_feedback,
            audit: &audit,
        },
    );
    transcripts.extend(cycle.transcripts);
    let result = if let Some(outcome) = cycle.terminal {
        Err(StageFailure::from_outcome(outcome, FailureKind::BuildFailure, cycle.error.as_deref()))
    } else if !cycle.accepted {
        let fb = cycle.verdict.map(|v| v.feedback).unwrap_or_default();
        Err(StageFailure::new(FailureKind::CriticRejected, format!("setup rejected: {fb}")))
    } else {
        let setup = parse_setup(cycle.answer.as_ref().unwrap_or(&Value::Null));
        Ok(BuilderResult { plan: plan.clone(), setup })
    };
    (Some(plan), StageOutput { result, transcripts })
}
