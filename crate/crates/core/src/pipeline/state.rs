use std::sync::Arc;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::llm::UsageLedger;
use crate::stages::{FailureKind, StageFailure};
use crate::store::TraceEntry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Knowledge,
    Builder,
    Exploiter,
    Verifier,
    Stored,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Knowledge => "knowledge",
            Stage::Builder => "builder",
            Stage::Exploiter => "exploiter",
            Stage::Verifier => "verifier",
            Stage::Stored => "stored",
        }
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbortCause {
    Budget,
    Time,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Status {
    Running,
    Reproduced,
    Failed { stage: Stage, kind: FailureKind, reason: String },
    Aborted { stage: Stage, cause: AbortCause, reason: String },
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Running => "running",
            Status::Reproduced => "reproduced",
            Status::Failed { .. } => "failed",
            Status::Aborted { .. } => "aborted",
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum StateError {
    #[error("stage {to} cannot follow {from}")]
    OutOfOrder { from: Stage, to: Stage },
    #[error("pipeline already finished as {0}")]
    Terminal(&'static str),
}

/// Per-attempt state machine. Stages only move forward and a terminal
/// status never changes.
#[derive(Debug, Clone)]
pub struct PipelineState {
    pub cve_id: String,
    stage: Stage,
    status: Status,
    pub ledger: Arc<UsageLedger>,
    pub started_at: Instant,
    pub deadline: Instant,
    trace: Vec<TraceEntry>,
}

impl PipelineState {
    pub fn new(cve_id: impl Into<String>, ledger: Arc<UsageLedger>, deadline: Instant) -> Self {
        Self {
            cve_id: cve_id.into(),
            stage: Stage::Ingest,
            status: Status::Running,
            ledger,
            started_at: Instant::now(),
            deadline,
            trace: vec![TraceEntry {
                stage: Stage::Ingest.to_string(),
                status: "running".into(),
            }],
        }
    }

    pub fn stage(&self) -> Stage {
        self.stage
    }

    pub fn status(&self) -> &Status {
        &self.status
    }

    pub fn trace(&self) -> &[TraceEntry] {
        &self.trace
    }

    pub fn is_terminal(&self) -> bool {
        self.status != Status::Running
    }

    fn guard(&self) -> Result<(), StateError> {
        if self.is_terminal() {
            Err(StateError::Terminal(self.status.label()))
        } else {
            Ok(())
        }
    }

    pub fn enter(&mut self, next: Stage) -> Result<(), StateError> {
        self.guard()?;
        if next <= self.stage {
            return Err(StateError::OutOfOrder { from: self.stage, to: next });
        }
        self.stage = next;
        self.trace.push(TraceEntry {
            stage: next.to_string(),
            status: "running".into(),
        });
        Ok(())
    }

    fn finish(&mut self, status: Status) -> Result<(), StateError> {
        self.guard()?;
        self.trace.push(TraceEntry {
            stage: self.stage.to_string(),
            status: status.label().into(),
        });
        self.status = status;
        Ok(())
    }

    /// Budget and timeout failures become aborts; everything else a failure.
    pub fn fail(&mut self, failure: StageFailure) -> Result<(), StateError> {
        let stage = self.stage;
        let status = match failure.kind {
            FailureKind::Budget => Status::Aborted {
                stage,
                cause: AbortCause::Budget,
                reason: failure.reason,
            },
            FailureKind::Timeout => Status::Aborted {
                stage,
                cause: AbortCause::Time,
                reason: failure.reason,
            },
            kind => Status::Failed {
                stage,
                kind,
                reason: failure.reason,
            },
        };
        self.finish(status)
    }

    pub fn reproduced(&mut self) -> Result<(), StateError> {
        if self.stage != Stage::Stored {
            return Err(StateError::OutOfOrder {
                from: self.stage,
                to: Stage::Stored,
            });
        }
        self.finish(Status::Reproduced)
    }

    pub fn failure_kind(&self) -> Option<FailureKind> {
        match &self.status {
            Status::Failed { kind, .. } => Some(*kind),
            Status::Aborted { cause: AbortCause::Budget, .. } => Some(FailureKind::Budget),
            Status::Aborted { cause: AbortCause::Time, .. } => Some(FailureKind::Timeout),
            _ => None,
        }
    }

    pub fn failure_reason(&self) -> Option<&str> {
        match &self.status {
            Status::Failed { reason, .. } | Status::Aborted { reason, .. } => Some(reason),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::time::Duration;

    fn state() -> PipelineState {
        PipelineState::new("CVE-1", Arc::new(UsageLedger::new()), Instant::now() + Duration::from_secs(60))
    }

    #[test]
    fn stages_move_forward_only() {
        let mut s = state();
        s.enter(Stage::Knowledge).unwrap();
        s.enter(Stage::Builder).unwrap();
        assert_eq!(
            s.enter(Stage::Knowledge),
            Err(StateError::OutOfOrder { from: Stage::Builder, to: Stage::Knowledge })
        );
        assert!(s.reproduced().is_err());
    }

    #[test]
    fn terminal_status_is_immutable() {
        let mut s = state();
        s.fail(StageFailure::new(FailureKind::Budget, "cap")).unwrap();
        assert_eq!(s.status().label(), "aborted");
        assert_eq!(s.failure_kind(), Some(FailureKind::Budget));
        assert_eq!(s.enter(Stage::Knowledge), Err(StateError::Terminal("aborted")));
        assert!(s.fail(StageFailure::new(FailureKind::FormatError, "x")).is_err());
        let t: Vec<_> = s.trace().iter().map(|e| (e.stage.as_str(), e.status.as_str())).collect();
        assert_eq!(t, [("ingest", "running"), ("ingest", "aborted")]);
    }
}
