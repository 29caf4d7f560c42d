use std::sync::Arc;
use std::time::{Duration, Instant};

use thiserror::Error;

use super::format::OutputSchema;
use super::ledger::{Budget, LimitHit, UsageEntry};
use super::provider::{CompletionRequest, ProviderError, ProviderRegistry};
use super::roles::RoleBindings;
use super::types::{ChatTurn, RoleName, ToolSchema};

pub const TRANSPORT_RETRIES: u32 = 3;
pub const FORMAT_CORRECTION_ATTEMPTS: u32 = 3;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum GatewayError {
    #[error("provider error: {0}")]
    Provider(#[from] ProviderError),
    #[error("budget exceeded: call not made")]
    BudgetExceeded,
    #[error("deadline exceeded: call not made")]
    DeadlineExceeded,
    #[error("empty history")]
    EmptyHistory,
    #[error("provider {0:?} is not registered")]
    UnknownProvider(String),
}

impl From<LimitHit> for GatewayError {
    fn from(hit: LimitHit) -> Self {
        match hit {
            LimitHit::Budget => GatewayError::BudgetExceeded,
            LimitHit::Deadline => GatewayError::DeadlineExceeded,
        }
    }
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum FormatError {
    #[error("output still unparseable after {attempts} correction attempts: {last_error}")]
    Exhausted { attempts: u32, last_error: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

/// Routes role calls to providers and books every successful call on the
/// attempt's ledger. Cheap to clone and safe to share between pipelines.
#[derive(Debug, Clone)]
pub struct Gateway {
    providers: ProviderRegistry,
    bindings: Arc<RoleBindings>,
    retry_base: Duration,
}

impl Gateway {
    pub fn new(providers: ProviderRegistry, bindings: RoleBindings) -> Self {
        Self {
            providers,
            bindings: Arc::new(bindings),
            retry_base: Duration::from_millis(500),
        }
    }

    pub fn with_retry_base(mut self, base: Duration) -> Self {
        self.retry_base = base;
        self
    }

    pub fn bindings(&self) -> &RoleBindings {
        &self.bindings
    }

    pub fn complete(
        &self,
        role: RoleName,
        history: &[ChatTurn],
        tools: &[ToolSchema],
        budget: &Budget,
    ) -> Result<(ChatTurn, UsageEntry), GatewayError> {
        if history.is_empty() {
            return Err(GatewayError::EmptyHistory);
        }
        let binding = self.bindings.get(role);
        let provider = self
            .providers
            .get(&binding.provider)
            .ok_or_else(|| GatewayError::UnknownProvider(binding.provider.clone()))?;
        let req = CompletionRequest {
            role,
            model_id: &binding.model_id,
            history,
            tools,
        };
        budget.check_deadline()?;
        let (est_prompt, est_completion) = provider.estimate_usage(&req);
        budget.check_spend(binding.pricing.cost(est_prompt, est_completion))?;

        let started = Instant::now();
        let mut attempt = 0;
        let reply = loop {
            match provider.complete(&req) {
                Ok(r) => break r,
                Err(e) if e.is_retryable() && attempt < TRANSPORT_RETRIES => {
                    let wait = self.retry_base * 2u32.pow(attempt);
                    tracing::warn!(%role, error = %e, attempt, "retrying provider call");
                    attempt += 1;
                    std::thread::sleep(wait.min(budget.remaining()));
                    budget.check_deadline()?;
                }
                Err(e) => return Err(e.into()),
            }
        };
        let entry = UsageEntry {
            role,
            model_id: binding.model_id.clone(),
            prompt_tokens: reply.prompt_tokens,
            completion_tokens: reply.completion_tokens,
            cost_usd: binding.pricing.cost(reply.prompt_tokens, reply.completion_tokens),
            wall_time_ms: started.elapsed().as_millis() as u64,
        };
        budget.ledger.record(entry.clone());
        Ok((reply.turn, entry))
    }

    /// Parses `raw` against `schema`, falling back to up to three
    /// format-corrector calls. The first parseable output wins.
    pub fn enforce_format(
        &self,
        raw: &str,
        schema: &OutputSchema,
        budget: &Budget,
    ) -> Result<serde_json::Value, FormatError> {
        let mut last_error = match schema.parse(raw) {
            Ok(v) => return Ok(v),
            Err(e) => e,
        };
        for _ in 0..FORMAT_CORRECTION_ATTEMPTS {
            let history = [
                ChatTurn::system(
                    "You convert text into one JSON object that matches a given schema. \
                     Preserve the original content; do not invent values. Output only the JSON object.",
                ),
                ChatTurn::user(format!(
                    "{}\nThe previous attempt failed with: {last_error}\n\nText to convert:\n{raw}",
                    schema.describe()
                )),
            ];
            let (turn, _) = self.complete(RoleName::FormatCorrector, &history, &[], budget)?;
            match schema.parse(&turn.content) {
                Ok(v) => return Ok(v),
                Err(e) => last_error = e,
            }
        }
        Err(FormatError::Exhausted {
            attempts: FORMAT_CORRECTION_ATTEMPTS,
            last_error,
        })
    }
}
