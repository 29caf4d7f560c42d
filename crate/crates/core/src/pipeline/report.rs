use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::stages::FailureKind;
use crate::store::RunMetadata;

/// One attempt of one CVE in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttemptRecord {
    pub cve_id: String,
    pub round: u32,
    pub run: u32,
    pub status: String,
    pub stage: String,
    pub failure_kind: Option<FailureKind>,
    pub failure_reason: Option<String>,
    pub cost_usd: f64,
    pub seconds: f64,
    pub sandbox_id: Option<String>,
}

impl From<&RunMetadata> for AttemptRecord {
    fn from(m: &RunMetadata) -> Self {
        Self {
            cve_id: m.cve_id.clone(),
            round: m.round,
            run: m.run,
            status: m.status.clone(),
            stage: m.stage.clone(),
            failure_kind: m.failure_kind,
            failure_reason: m.failure_reason.clone(),
            cost_usd: m.cost_usd,
            seconds: m.seconds,
            sandbox_id: m.sandbox_id.clone(),
        }
    }
}

/// Final per-CVE line of a batch. `round` is the round of the last attempt,
/// 0 when the CVE was already reproduced before the batch started.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchRecord {
    pub cve_id: String,
    pub status: String,
    pub stage: String,
    /// Summed over every attempt made in this batch.
    pub cost_usd: f64,
    pub seconds: f64,
    pub round: u32,
    pub attempts: u32,
    pub failure_kind: Option<FailureKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub deadline_exceeded: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: u32,
    pub attempted: usize,
    pub reproduced: usize,
    pub remaining: usize,
    pub cost_usd: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BatchReport {
    pub records: Vec<BatchRecord>,
    pub rounds: Vec<RoundSummary>,
    pub attempts: Vec<AttemptRecord>,
    pub skipped: Vec<String>,
}

impl BatchReport {
    pub fn reproduced(&self) -> usize {
        self.records.iter().filter(|r| r.status == "reproduced").count()
    }

    pub fn remaining(&self) -> usize {
        self.records.len() - self.reproduced()
    }

    pub fn total_cost(&self) -> f64 {
        self.attempts.iter().map(|a| a.cost_usd).sum()
    }

    pub fn avg_cost_per_attempt(&self) -> Option<f64> {
        (!self.attempts.is_empty()).then(|| self.total_cost() / self.attempts.len() as f64)
    }

    /// Cost of reproduced attempts only, divided by their number.
    pub fn avg_cost_per_success(&self) -> Option<f64> {
        let ok: Vec<f64> = self
            .attempts
            .iter()
            .filter(|a| a.status == "reproduced")
            .map(|a| a.cost_usd)
            .collect();
        (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64)
    }

    pub fn has_infrastructure_failure(&self) -> bool {
        self.attempts
            .iter()
            .any(|a| a.failure_kind == Some(FailureKind::Infrastructure))
    }

    /// Reproduced count per round, in round order.
    pub fn convergence(&self) -> Vec<(u32, usize)> {
        self.rounds.iter().map(|r| (r.round, r.reproduced)).collect()
    }

    /// The report without wall times, sandbox ids or run indices, for comparing
    /// runs of the same scripts.
    pub fn comparable(&self) -> serde_json::Value {
        let records: Vec<_> = self
            .records
            .iter()
            .map(|r| {
                serde_json::json!({
                    "cve_id": r.cve_id, "status": r.status, "stage": r.stage,
                    "cost_usd": round6(r.cost_usd), "round": r.round, "attempts": r.attempts,
                    "failure_kind": r.failure_kind,
                })
            })
            .collect();
        let rounds: Vec<_> = self
            .rounds
            .iter()
            .map(|r| {
                serde_json::json!({
                    "round": r.round, "attempted": r.attempted, "reproduced": r.reproduced,
                    "remaining": r.remaining, "cost_usd": round6(r.cost_usd),
                })
            })
            .collect();
        let mut attempts: Vec<_> = self
            .attempts
            .iter()
            .map(|a| {
                serde_json::json!({
                    "cve_id": a.cve_id, "round": a.round, "status": a.status, "stage": a.stage,
                    "failure_kind": a.failure_kind, "cost_usd": round6(a.cost_usd),
                })
            })
            .collect();
        attempts.sort_by_key(|v| v.to_string());
        serde_json::json!({"records": records, "rounds": rounds, "attempts": attempts, "skipped": self.skipped})
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap_or_default()
    }

    pub fn render_text(&self) -> String {
        let mut out = String::new();
        if self.records.is_empty() {
            out.push_str("empty batch: no CVEs\n");
            return out;
        }
        let _ = writeln!(out, "{:<18} {:<11} {:<10} {:>9} {:>9} {:>5}", "cve", "status", "stage", "cost_usd", "seconds", "round");
        for r in &self.records {
            let mut status = r.status.clone();
            if r.deadline_exceeded == Some(true) {
                status.push('*');
            }
            let _ = writeln!(
                out,
                "{:<18} {:<11} {:<10} {:>9.4} {:>9.1} {:>5}",
                r.cve_id, status, r.stage, r.cost_usd, r.seconds, r.round
            );
        }
        if self.records.iter().any(|r| r.deadline_exceeded == Some(true)) {
            out.push_str("* deadline exceeded\n");
        }
        out.push('\n');
        for s in &self.rounds {
            let _ = writeln!(
                out,
                "round {}: attempted {}, reproduced {}, remaining {}, cost ${:.4}",
                s.round, s.attempted, s.reproduced, s.remaining, s.cost_usd
            );
        }
        let _ = writeln!(out, "reproduced {}/{} (remaining {})", self.reproduced(), self.records.len(), self.remaining());
        let _ = writeln!(out, "total cost ${:.4}", self.total_cost());
        if let Some(avg) = self.avg_cost_per_attempt() {
            let _ = writeln!(out, "average cost per attempt ${avg:.4}");
        }
        if let Some(avg) = self.avg_cost_per_success() {
            let _ = writeln!(out, "average cost per reproduced attempt ${avg:.4}");
        }
        out
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Human-readable summary of one attempt.
pub fn render_attempt(m: &RunMetadata) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{} run {}: {} at stage {}", m.cve_id, m.run, m.status, m.stage);
    if let Some(kind) = m.failure_kind {
        let _ = writeln!(out, "failure: {kind}");
        if kind == FailureKind::Timeout {
            let _ = writeln!(out, "deadline exceeded");
        }
    }
    if let Some(reason) = &m.failure_reason {
        let _ = writeln!(out, "reason: {reason}");
    }
    let _ = writeln!(out, "cost: ${:.4} over {} model calls", m.cost_usd, m.usage.len());
    let _ = writeln!(out, "time: {:.1}s", m.seconds);
    let trace: Vec<String> = m.trace.iter().map(|t| format!("{}:{}", t.stage, t.status)).collect();
    let _ = writeln!(out, "trace: {}", trace.join(" -> "));
    for (label, path) in [
        ("kb", &m.kb_path),
        ("exploit", &m.exploit_path),
        ("verifier", &m.verifier_path),
        ("snapshot", &m.snapshot_ref),
    ] {
        if let Some(p) = path {
            let _ = writeln!(out, "{label}: {p}");
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn attempt(cve: &str, round: u32, status: &str, cost: f64) -> AttemptRecord {
        AttemptRecord {
            cve_id: cve.into(),
            round,
            run: round,
            status: status.into(),
            stage: "verifier".into(),
            failure_kind: (status != "reproduced").then_some(FailureKind::CriticRejected),
            failure_reason: None,
            cost_usd: cost,
            seconds: 1.0,
            sandbox_id: Some(format!("sb-{cve}-{round}")),
        }
    }

    #[test]
    fn empty_report() {
        let r = BatchReport::default();
        assert_eq!(r.reproduced(), 0);
        assert_eq!(r.avg_cost_per_attempt(), None);
        assert!(r.render_text().contains("empty batch"));
        assert_eq!(serde_json::from_str::<BatchReport>(&r.to_json()).unwrap(), r);
    }

    #[test]
    fn averages_split_attempts_and_successes() {
        let r = BatchReport {
            attempts: vec![
                attempt("CVE-2024-0001", 1, "failed", 1.0),
                attempt("CVE-2024-0001", 2, "reproduced", 2.0),
                attempt("CVE-2024-0002", 1, "reproduced", 4.0),
            ],
            ..Default::default()
        };
        assert!((r.total_cost() - 7.0).abs() < 1e-12);
        assert!((r.avg_cost_per_attempt().unwrap() - 7.0 / 3.0).abs() < 1e-12);
        assert!((r.avg_cost_per_success().unwrap() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn comparable_ignores_timing() {
        let mut a = BatchReport {
            attempts: vec![attempt("CVE-2024-0001", 1, "failed", 1.0)],
            ..Default::default()
        };
        let mut b = a.clone();
        b.attempts[0].seconds = 99.0;
        b.attempts[0].sandbox_id = None;
        assert_eq!(a.comparable(), b.comparable());
        a.attempts[0].status = "reproduced".into();
        assert_ne!(a.comparable(), b.comparable());
    }
}
