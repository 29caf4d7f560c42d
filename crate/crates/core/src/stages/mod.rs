//! The four reproduction stages: knowledge base, builder, exploiter, verifier.

pub mod builder;
pub mod exploiter;
pub mod knowledge;
pub mod prompts;
pub mod verifier;

use serde::{Deserialize, Serialize};

use crate::agent::{AgentOutcome, AgentTranscript};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailureKind {
    BuildFailure,
    Timeout,
    Budget,
    CriticRejected,
    FormatError,
    IngestError,
    AgentFailure,
    FlagCheckFailed,
    Infrastructure,
}

impl FailureKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FailureKind::BuildFailure => "build_failure",
            FailureKind::Timeout => "timeout",
            FailureKind::Budget => "budget",
            FailureKind::CriticRejected => "critic_rejected",
            FailureKind::FormatError => "format_error",
            FailureKind::IngestError => "ingest_error",
            FailureKind::AgentFailure => "agent_failure",
            FailureKind::FlagCheckFailed => "flag_check_failed",
            FailureKind::Infrastructure => "infrastructure",
        }
    }
}

impl std::fmt::Display for FailureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageFailure {
    pub kind: FailureKind,
    pub reason: String,
}

impl StageFailure {
    pub fn new(kind: FailureKind, reason: impl Into<String>) -> Self {
        Self {
            kind,
            reason: reason.into(),
        }
    }

    /// Maps an agent outcome that ended a stage. Outcomes that are not about
    /// caps or formatting fall back to `otherwise`.
    pub fn from_outcome(outcome: AgentOutcome, otherwise: FailureKind, reason: Option<&str>) -> Self {
        let kind = match outcome {
            AgentOutcome::BudgetExhausted => FailureKind::Budget,
            AgentOutcome::DeadlineExhausted => FailureKind::Timeout,
            AgentOutcome::FormatError => FailureKind::FormatError,
            AgentOutcome::ProviderError => FailureKind::Infrastructure,
            AgentOutcome::FinalAnswer | AgentOutcome::GaveUp | AgentOutcome::CapExhausted => otherwise,
        };
        let outcome_name = serde_json::to_value(outcome)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        let reason = match reason {
            Some(r) => format!("{outcome_name}: {r}"),
            None => outcome_name,
        };
        Self { kind, reason }
    }
}

impl std::fmt::Display for StageFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.kind, self.reason)
    }
}

/// A stage result plus every agent transcript produced on the way.
#[derive(Debug, Clone)]
pub struct StageOutput<T> {
    pub result: Result<T, StageFailure>,
    pub transcripts: Vec<AgentTranscript>,
}

/// How proof-of-concept and verifier scripts are named and run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptSettings {
    pub interpreter: String,
    pub extension: String,
}

impl Default for ScriptSettings {
    fn default() -> Self {
        Self {
            interpreter: "python3".into(),
            extension: "py".into(),
        }
    }
}

impl ScriptSettings {
    pub fn exploit_file(&self) -> String {
        format!("exploit.{}", self.extension)
    }

    pub fn verifier_file(&self) -> String {
        format!("verifier.{}", self.extension)
    }

    pub fn run_command(&self, file: &str) -> String {
        format!("{} {file}", self.interpreter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outcome_mapping() {
        let f = StageFailure::from_outcome(AgentOutcome::DeadlineExhausted, FailureKind::BuildFailure, None);
        assert_eq!(f.kind, FailureKind::Timeout);
        assert_eq!(f.reason, "deadline_exhausted");
        let f = StageFailure::from_outcome(AgentOutcome::GaveUp, FailureKind::BuildFailure, Some("x"));
        assert_eq!((f.kind, f.reason.as_str()), (FailureKind::BuildFailure, "gave_up: x"));
        assert_eq!(
            serde_json::to_value(FailureKind::CriticRejected).unwrap(),
            FailureKind::CriticRejected.as_str()
        );
    }

    #[test]
    fn script_names() {
        let s = ScriptSettings::default();
        assert_eq!(s.exploit_file(), "exploit.py");
        assert_eq!(s.run_command(&s.verifier_file()), "python3 verifier.py");
    }
}
