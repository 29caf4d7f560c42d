use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::builder::FULL_TOOLS;
use super::{prompts, FailureKind, ScriptSettings, StageFailure, StageOutput};
use crate::agent::{run_dev_critic_cycle, AgentEnv, AgentSpec, ContextBlocks, CycleRequest};
use crate::digest::sha256_hex;
use crate::llm::{FieldKind, FieldSpec, OutputSchema, RoleName};
use crate::sandbox::SandboxHandle;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExploitReport {
    pub success: bool,
    pub exploit_overview: String,
    pub poc_script: String,
    pub example_input: String,
    pub demonstrated_evidence: String,
    /// Sandbox-relative path of the script.
    pub script_path: String,
    pub script_digest: String,
}

impl ExploitReport {
    pub fn render(&self) -> String {
        format!(
            "Exploit overview: {}\n\nScript `{}` (example input: {}):\n{}\n\nEvidence:\n{}",
            self.exploit_overview, self.script_path, self.example_input, self.poc_script, self.demonstrated_evidence
        )
    }
}

pub fn exploit_schema() -> OutputSchema {
    OutputSchema::new(
        "exploit_report",
        vec![
            FieldSpec::required("success", FieldKind::Bool, "whether the vulnerability was triggered"),
            FieldSpec::required("exploit_overview", FieldKind::Text, "how the exploit works"),
            FieldSpec::optional("poc_script", FieldKind::Text, "full script text"),
            FieldSpec::optional("example_input", FieldKind::Text, "the crashing input used"),
            FieldSpec::optional(
                "demonstrated_evidence",
                FieldKind::Text,
                "log excerpt showing the trigger, citing the log file path",
            ),
        ],
    )
    .with_decision("success")
}

fn log_ref_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\.cveforge/logs/(\d{4})_(out|err)\.log").unwrap())
}

/// Command logs cited in the evidence that exist in the sandbox.
pub fn cited_logs(evidence: &str, sandbox: &SandboxHandle) -> Vec<String> {
    let known: Vec<String> = sandbox
        .command_logs()
        .into_iter()
        .flat_map(|l| [l.stdout_path, l.stderr_path])
        .collect();
    log_ref_re()
        .find_iter(evidence)
        .map(|m| m.as_str().to_string())
        .filter(|p| known.contains(p) && sandbox.workdir().join(p).is_file())
        .collect()
}

fn text(v: &Value, key: &str) -> String {
    v.get(key).and_then(Value::as_str).unwrap_or("").trim().to_string()
}

/// Mechanical checks before the critic sees the attempt.
pub fn audit_exploit(v: &Value, sandbox: &SandboxHandle, scripts: &ScriptSettings) -> Result<(), String> {
    let file = scripts.exploit_file();
    let on_disk = sandbox.workdir().join(&file).is_file();
    if !on_disk && text(v, "poc_script").is_empty() {
        return Err(format!("No proof of concept found: write it to `{file}` and run it."));
    }
    if cited_logs(&text(v, "demonstrated_evidence"), sandbox).is_empty() {
        return Err(format!(
            "The evidence does not cite a command log from this environment. Run `{}` with the \
             example input and cite its log file (for example `.cveforge/logs/0003_err.log`).",
            scripts.run_command(&file)
        ));
    }
    Ok(())
}

/// The file in the sandbox wins over the script text in the answer; if the
/// file is missing it is written from the answer.
pub fn settle_script(v: &Value, sandbox: &SandboxHandle, scripts: &ScriptSettings) -> Result<ExploitReport, String> {
    let file = scripts.exploit_file();
    let path = sandbox.workdir().join(&file);
    let script = match std::fs::read_to_string(&path) {
        Ok(s) => s,
        Err(_) => {
            let s = text(v, "poc_script");
            sandbox
                .write_to_file(&file, &s)
                .map_err(|e| format!("writing {file}: {e}"))?;
            s
        }
    };
    Ok(ExploitReport {
        success: v.get("success").and_then(Value::as_bool).unwrap_or(false),
        exploit_overview: text(v, "exploit_overview"),
        script_digest: sha256_hex(&script),
        poc_script: script,
        example_input: text(v, "example_input"),
        demonstrated_evidence: text(v, "demonstrated_evidence"),
        script_path: file,
    })
}

pub fn run_exploiter(
    env: AgentEnv<'_>,
    kb_json: &str,
    setup: &str,
    scripts: &ScriptSettings,
    max_feedback: usize,
) -> StageOutput<ExploitReport> {
    let exploit_file = scripts.exploit_file();
    let dev_prompt = prompts::fill(prompts::EXPLOIT_DEVELOPER, &[("exploit_path", &exploit_file)]);
    let dev = AgentSpec::developer(RoleName::ExploitDeveloper, dev_prompt, FULL_TOOLS, exploit_schema());
    let critic = AgentSpec::critic(RoleName::ExploitCritic, prompts::EXPLOIT_CRITIC);
    let sandbox = env.sandbox;
    let audit = |v: &Value| audit_exploit(v, sandbox, scripts);
    let base = ContextBlocks::with_kb(kb_json).input("Environment setup", setup);
    let cycle = run_dev_critic_cycle(
        env,
        CycleRequest {
            developer: &dev,
            critic: &critic,
            context: base.clone(),
            critic_context: base,
            max_feedback,
            audit: &audit,
        },
    );
    let result = if let Some(outcome) = cycle.terminal {
        Err(StageFailure::from_outcome(outcome, FailureKind::AgentFailure, cycle.error.as_deref()))
    } else if !cycle.accepted {
        let fb = cycle.verdict.map(|v| v.feedback).unwrap_or_default();
        Err(StageFailure::new(FailureKind::CriticRejected, format!("exploit rejected: {fb}")))
    } else {
        settle_script(cycle.answer.as_ref().unwrap_or(&Value::Null), sandbox, scripts)
            .map_err(|e| StageFailure::new(FailureKind::Infrastructure, e))
    };
    StageOutput {
        result,
        transcripts: cycle.transcripts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_reference_pattern() {
        let found: Vec<_> = log_ref_re()
            .find_iter("see .cveforge/logs/0004_err.log and /x/.cveforge/logs/12_out.log")
            .map(|m| m.as_str())
            .collect();
        assert_eq!(found, [".cveforge/logs/0004_err.log"]);
    }
}
