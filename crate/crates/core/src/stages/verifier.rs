use rand::distr::{Alphanumeric, SampleString};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::builder::READ_ONLY_TOOLS;
use super::exploiter::ExploitReport;
use super::{prompts, FailureKind, ScriptSettings, StageFailure, StageOutput};
use crate::agent::{render_for_review, run_agent, AgentEnv, AgentOutcome, AgentSpec, ContextBlocks, CritiqueVerdict};
use crate::digest::file_digest;
use crate::llm::{FieldKind, FieldSpec, OutputSchema, RoleName};
use crate::sandbox::{NetworkPolicy, SandboxError, SandboxHandle};

pub const FLAG_LEN: usize = 16;
pub const DEFAULT_CHECK_ATTEMPTS: usize = 5;
const EXCERPT_LINES: usize = 40;

pub fn generate_flag() -> String {
    Alphanumeric.sample_string(&mut rand::rng(), FLAG_LEN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sections {
    pub pre_setup: String,
    pub exploit_execution: String,
    pub post_setup: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifierScript {
    pub script_text: String,
    pub flag_token: String,
    pub sections: Sections,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlagCheckOutcome {
    pub attempt_index: usize,
    pub ran_ok: bool,
    pub flag_found: bool,
    pub exploit_digest_before: String,
    pub exploit_digest_after: String,
    pub output_excerpt: String,
    pub failure_reason: Option<String>,
}

impl FlagCheckOutcome {
    pub fn success(&self) -> bool {
        self.ran_ok && self.flag_found && self.exploit_digest_before == self.exploit_digest_after
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CheckRecord {
    FlagCheck { index: usize, outcome: FlagCheckOutcome },
    Critic { index: usize, attempt: usize, verdict: CritiqueVerdict },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VerifierLimits {
    pub flag_checks: usize,
    pub critic_reviews: usize,
}

impl Default for VerifierLimits {
    fn default() -> Self {
        Self {
            flag_checks: DEFAULT_CHECK_ATTEMPTS,
            critic_reviews: DEFAULT_CHECK_ATTEMPTS,
        }
    }
}

pub fn verifier_schema() -> OutputSchema {
    OutputSchema::new(
        "verifier",
        vec![
            FieldSpec::required("script", FieldKind::Text, "full verifier script"),
            FieldSpec::optional("pre_setup", FieldKind::Text, "name of the pre-setup function"),
            FieldSpec::optional("exploit_execution", FieldKind::Text, "name of the exploit-execution function"),
            FieldSpec::optional("post_setup", FieldKind::Text, "name of the post-setup function"),
            FieldSpec::optional("notes", FieldKind::Text, "anything the reviewer should know"),
        ],
    )
}

/// Checks the three-part structure and the fixed exploit reference.
pub fn parse_verifier(v: &Value, flag: &str, exploit_file: &str) -> Result<VerifierScript, String> {
    let get = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or("").trim().to_string();
    let script = v.get("script").and_then(Value::as_str).unwrap_or("").to_string();
    if script.trim().is_empty() {
        return Err("the verifier script is empty".into());
    }
    let sections = Sections {
        pre_setup: get("pre_setup"),
        exploit_execution: get("exploit_execution"),
        post_setup: get("post_setup"),
    };
    for (label, name) in [
        ("pre_setup", &sections.pre_setup),
        ("exploit_execution", &sections.exploit_execution),
        ("post_setup", &sections.post_setup),
    ] {
        if name.is_empty() {
            return Err(format!("the `{label}` section is missing"));
        }
        if !script.contains(name.as_str()) {
            return Err(format!("the `{label}` section `{name}` does not appear in the script"));
        }
    }
    if !script.contains(exploit_file) {
        return Err(format!("the script does not run `{exploit_file}`"));
    }
    Ok(VerifierScript {
        script_text: script,
        flag_token: flag.to_string(),
        sections,
    })
}

fn digest_or_missing(sandbox: &SandboxHandle, file: &str) -> String {
    file_digest(&sandbox.workdir().join(file)).unwrap_or_else(|_| "missing".into())
}

fn excerpt(text: &str) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(EXCERPT_LINES)..].join("\n")
}

/// Writes and runs the verifier with restricted network. The flag must be in
/// the process's standard output; stderr and other files do not count.
pub fn check_flag(
    sandbox: &SandboxHandle,
    verifier: &VerifierScript,
    exploit: &ExploitReport,
    scripts: &ScriptSettings,
    attempt_index: usize,
) -> FlagCheckOutcome {
    let file = scripts.verifier_file();
    let before = digest_or_missing(sandbox, &exploit.script_path);
    let mut outcome = FlagCheckOutcome {
        attempt_index,
        ran_ok: false,
        flag_found: false,
        exploit_digest_before: before.clone(),
        exploit_digest_after: before.clone(),
        output_excerpt: String::new(),
        failure_reason: None,
    };
    if let Err(e) = sandbox.write_to_file(&file, &verifier.script_text) {
        outcome.failure_reason = Some(format!("could not write the verifier: {e}"));
        return outcome;
    }
    let timeout = sandbox.settings().foreground_timeout;
    let run = sandbox.execute_with(&scripts.run_command(&file), false, NetworkPolicy::Restricted, timeout);
    let log = match run {
        Ok(r) => {
            outcome.output_excerpt = excerpt(&r.payload);
            r.command
        }
        Err(SandboxError::Timeout { log, tail, .. }) => {
            outcome.output_excerpt = excerpt(&tail);
            outcome.failure_reason = Some("the verifier timed out".into());
            Some(log)
        }
        Err(e) => {
            outcome.failure_reason = Some(e.to_string());
            None
        }
    };
    outcome.exploit_digest_after = digest_or_missing(sandbox, &exploit.script_path);
    if let Some(log) = log {
        let code = log.exit_code;
        outcome.ran_ok = code == Some(0);
        let stdout = std::fs::read(sandbox.workdir().join(&log.stdout_path))
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .unwrap_or_default();
        outcome.flag_found = stdout.contains(&verifier.flag_token);
        if outcome.failure_reason.is_none() {
            outcome.failure_reason = if !outcome.ran_ok {
                Some(format!("the verifier exited with status {}", code.map_or("none".into(), |c| c.to_string())))
            } else if !outcome.flag_found {
                Some("the flag was not printed to standard output".into())
            } else {
                None
            };
        }
    }
    if outcome.exploit_digest_before != outcome.exploit_digest_after {
        outcome.failure_reason = Some(format!("the verifier modified `{}`", exploit.script_path));
        // Put the original back so later attempts start clean.
        let _ = sandbox.write_to_file(&exploit.script_path, &exploit.poc_script);
    }
    outcome
}

#[derive(Debug, Clone)]
pub struct VerifierRun {
    pub checks: Vec<CheckRecord>,
    pub output: StageOutput<VerifierScript>,
}

pub fn run_verifier(
    env: AgentEnv<'_>,
    kb_json: &str,
    exploit: &ExploitReport,
    flag: &str,
    scripts: &ScriptSettings,
    limits: VerifierLimits,
) -> VerifierRun {
    let verifier_file = scripts.verifier_file();
    let prompt = prompts::fill(
        prompts::VERIFIER_DEVELOPER,
        &[
            ("exploit_path", &exploit.script_path),
            ("verifier_path", &verifier_file),
            ("run_command", &scripts.run_command(&verifier_file)),
            ("flag", flag),
        ],
    );
    let dev = AgentSpec::read_only(RoleName::VerifierDeveloper, prompt, READ_ONLY_TOOLS, verifier_schema());
    let critic = AgentSpec::critic(RoleName::VerifierCritic, prompts::VERIFIER_CRITIC);
    let mut ctx = ContextBlocks::with_kb(kb_json).input("Proof of concept", exploit.render());

    let mut checks = Vec::new();
    let mut transcripts = Vec::new();
    let (mut flag_attempts, mut critic_attempts) = (0usize, 0usize);
    let fail = |checks, transcripts, f: StageFailure| VerifierRun {
        checks,
        output: StageOutput { result: Err(f), transcripts },
    };
    loop {
        let run = run_agent(env, &dev, &ctx);
        transcripts.push(run.transcript.clone());
        let answer = match (run.outcome, &run.answer) {
            (AgentOutcome::FinalAnswer, Some(a)) => a.clone(),
            (outcome, _) => {
                let f = StageFailure::from_outcome(outcome, FailureKind::AgentFailure, run.transcript.error());
                return fail(checks, transcripts, f);
            }
        };

        flag_attempts += 1;
        let index = checks.len() + 1;
        let parsed = parse_verifier(&answer, flag, &exploit.script_path);
        let outcome = match &parsed {
            Ok(script) => check_flag(env.sandbox, script, exploit, scripts, flag_attempts),
            Err(reason) => FlagCheckOutcome {
                attempt_index: flag_attempts,
                ran_ok: false,
                flag_found: false,
                exploit_digest_before: String::new(),
                exploit_digest_after: String::new(),
                output_excerpt: String::new(),
                failure_reason: Some(format!("not run: {reason}")),
            },
        };
        let passed = parsed.is_ok() && outcome.success();
        let feedback = format!(
            "Flag check attempt {}/{} failed: {}\nOutput:\n{}",
            flag_attempts,
            limits.flag_checks,
            outcome.failure_reason.clone().unwrap_or_default(),
            outcome.output_excerpt
        );
        checks.push(CheckRecord::FlagCheck { index, outcome });
        if !passed {
            if flag_attempts >= limits.flag_checks {
                let f = StageFailure::new(FailureKind::FlagCheckFailed, feedback);
                return fail(checks, transcripts, f);
            }
            ctx.feedback.push(feedback);
            continue;
        }
        let script = parsed.expect("checked above");

        critic_attempts += 1;
        let critic_ctx = ContextBlocks::with_kb(kb_json)
            .input("Proof of concept", exploit.render())
            .input(format!("Verifier `{verifier_file}`"), script.script_text.clone())
            .input("Flag check", "The verifier ran, exited 0 and printed the flag.")
            .input("Developer transcript", render_for_review(&run.transcript, env.review_tokens));
        let review = run_agent(env, &critic, &critic_ctx);
        transcripts.push(review.transcript.clone());
        let verdict = match (review.outcome, &review.answer) {
            (AgentOutcome::FinalAnswer, Some(a)) => CritiqueVerdict::from_answer(a),
            (outcome, _) => {
                let f = StageFailure::from_outcome(outcome, FailureKind::AgentFailure, review.transcript.error());
                return fail(checks, transcripts, f);
            }
        };
        let accepted = verdict.accepted;
        let feedback = verdict.feedback.clone();
        checks.push(CheckRecord::Critic {
            index: checks.len() + 1,
            attempt: critic_attempts,
            verdict,
        });
        if accepted {
            return VerifierRun {
                checks,
                output: StageOutput {
                    result: Ok(script),
                    transcripts,
                },
            };
        }
        if critic_attempts >= limits.critic_reviews {
            let f = StageFailure::new(FailureKind::CriticRejected, format!("verifier rejected: {feedback}"));
            return fail(checks, transcripts, f);
        }
        ctx.feedback.push(feedback);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn flags_are_fresh_alphanumerics() {
        let a = generate_flag();
        assert_eq!(a.len(), FLAG_LEN);
        assert!(a.chars().all(|c| c.is_ascii_alphanumeric()));
        assert_ne!(a, generate_flag());
    }

    #[test]
    fn sections_must_be_present() {
        let script = "import subprocess\ndef pre(): pass\ndef run(): subprocess.run(['python3','exploit.py'])\ndef post(): print('F')\n";
        let ok = json!({"script": script, "pre_setup": "pre", "exploit_execution": "run", "post_setup": "post"});
        assert!(parse_verifier(&ok, "F", "exploit.py").is_ok());
        let missing = json!({"script": script, "pre_setup": "pre", "exploit_execution": "run"});
        assert_eq!(
            parse_verifier(&missing, "F", "exploit.py").unwrap_err(),
            "the `post_setup` section is missing"
        );
        let absent = json!({"script": script, "pre_setup": "pre", "exploit_execution": "run", "post_setup": "check"});
        assert!(parse_verifier(&absent, "F", "exploit.py").unwrap_err().contains("does not appear"));
        assert!(parse_verifier(&ok, "F", "poc.py").unwrap_err().contains("poc.py"));
    }
}
