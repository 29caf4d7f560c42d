use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

pub use super::report::{BatchRecord, BatchReport, RoundSummary};
use super::report::AttemptRecord;
use super::Pipeline;
use crate::stages::FailureKind;

pub const DEFAULT_ROUNDS: u32 = 3;
pub const DEFAULT_PARALLELISM: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchOptions {
    pub rounds: u32,
    pub parallelism: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            rounds: DEFAULT_ROUNDS,
            parallelism: DEFAULT_PARALLELISM,
        }
    }
}

/// Round-based retry. Each round attempts every CVE not reproduced yet, each
/// in its own sandbox; CVEs already reproduced in the store are skipped.
pub fn batch_run(pipeline: &Pipeline, cve_ids: &[String], opts: &BatchOptions) -> BatchReport {
    let mut ids: Vec<String> = cve_ids.iter().map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    ids.sort();
    ids.dedup();

    let mut report = BatchReport::default();
    let mut worklist = Vec::new();
    for id in ids {
        if pipeline.store.is_reproduced(&id) {
            report.skipped.push(id);
        } else {
            worklist.push(id);
        }
    }

    let mut latest: BTreeMap<String, AttemptRecord> = BTreeMap::new();
    let mut spent: BTreeMap<String, (f64, f64, u32)> = BTreeMap::new();
    for round in 1..=opts.rounds.max(1) {
        if worklist.is_empty() {
            break;
        }
        let results = run_round(pipeline, &worklist, round, opts.parallelism);
        let mut reproduced = 0;
        let mut cost = 0.0;
        for a in &results {
            cost += a.cost_usd;
            let e = spent.entry(a.cve_id.clone()).or_default();
            e.0 += a.cost_usd;
            e.1 += a.seconds;
            e.2 += 1;
            if a.status == "reproduced" {
                reproduced += 1;
            }
            latest.insert(a.cve_id.clone(), a.clone());
        }
        worklist.retain(|id| latest.get(id).is_none_or(|a| a.status != "reproduced"));
        report.rounds.push(RoundSummary {
            round,
            attempted: results.len(),
            reproduced,
            remaining: worklist.len(),
            cost_usd: cost,
        });
        report.attempts.extend(results);
    }

    for id in &report.skipped {
        report.records.push(BatchRecord {
            cve_id: id.clone(),
            status: "reproduced".into(),
            stage: "stored".into(),
            cost_usd: 0.0,
            seconds: 0.0,
            round: 0,
            attempts: 0,
            failure_kind: None,
            deadline_exceeded: None,
        });
    }
    for (id, a) in latest {
        let (cost, seconds, attempts) = spent[&id];
        report.records.push(BatchRecord {
            cve_id: id,
            status: a.status,
            stage: a.stage,
            cost_usd: cost,
            seconds,
            round: a.round,
            attempts,
            failure_kind: a.failure_kind,
            deadline_exceeded: (a.failure_kind == Some(FailureKind::Timeout)).then_some(true),
        });
    }
    report.records.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    report.attempts.sort_by(|a, b| (a.round, &a.cve_id).cmp(&(b.round, &b.cve_id)));
    report
}

fn run_round(pipeline: &Pipeline, ids: &[String], round: u32, parallelism: usize) -> Vec<AttemptRecord> {
    let next = AtomicUsize::new(0);
    let out = Mutex::new(Vec::with_capacity(ids.len()));
    let workers = parallelism.clamp(1, ids.len().max(1));
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(id) = ids.get(i) else { break };
                tracing::info!(cve = %id, round, "attempt starting");
                let result = pipeline.reproduce(id, round);
                out.lock().unwrap().push(AttemptRecord::from(&result.metadata));
            });
        }
    });
    let mut results = out.into_inner().unwrap();
    results.sort_by(|a, b| a.cve_id.cmp(&b.cve_id));
    results
}
