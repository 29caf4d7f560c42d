use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::types::RoleName;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UsageEntry {
    pub role: RoleName,
    pub model_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub cost_usd: f64,
    pub wall_time_ms: u64,
}

#[derive(Debug, Default)]
struct LedgerInner {
    entries: Vec<UsageEntry>,
    total_cost: f64,
}

/// Append-only per-attempt usage record.
#[derive(Debug)]
pub struct UsageLedger {
    inner: Mutex<LedgerInner>,
    started: Instant,
}

impl Default for UsageLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl UsageLedger {
    pub fn new() -> Self {
        Self {
            inner: Mutex::new(LedgerInner::default()),
            started: Instant::now(),
        }
    }

    pub fn record(&self, entry: UsageEntry) {
        let mut inner = self.inner.lock().unwrap();
        inner.total_cost += entry.cost_usd;
        inner.entries.push(entry);
    }

    pub fn total_cost(&self) -> f64 {
        self.inner.lock().unwrap().total_cost
    }

    pub fn entries(&self) -> Vec<UsageEntry> {
        self.inner.lock().unwrap().entries.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().unwrap().entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn elapsed(&self) -> Duration {
        self.started.elapsed()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LimitHit {
    Budget,
    Deadline,
}

/// Spending cap and wall-clock deadline for one reproduction attempt.
#[derive(Debug, Clone)]
pub struct Budget {
    pub ledger: Arc<UsageLedger>,
    pub cap_usd: f64,
    pub deadline: Instant,
}

impl Budget {
    pub fn new(cap_usd: f64, max_runtime: Duration) -> Self {
        Self {
            ledger: Arc::new(UsageLedger::new()),
            cap_usd,
            deadline: Instant::now() + max_runtime,
        }
    }

    pub fn unlimited() -> Self {
        Self::new(f64::INFINITY, Duration::from_secs(365 * 24 * 3600))
    }

    pub fn check_deadline(&self) -> Result<(), LimitHit> {
        if Instant::now() >= self.deadline {
            Err(LimitHit::Deadline)
        } else {
            Ok(())
        }
    }

    /// Fails when the cap is already reached or `next_cost` would pass it.
    pub fn check_spend(&self, next_cost: f64) -> Result<(), LimitHit> {
        let total = self.ledger.total_cost();
        if total >= self.cap_usd || total + next_cost > self.cap_usd + 1e-12 {
            Err(LimitHit::Budget)
        } else {
            Ok(())
        }
    }

    pub fn check(&self) -> Result<(), LimitHit> {
        self.check_deadline()?;
        self.check_spend(0.0)
    }

    pub fn remaining(&self) -> Duration {
        self.deadline.saturating_duration_since(Instant::now())
    }
}
