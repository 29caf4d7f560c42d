use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use super::types::{ChatTurn, RoleName, ToolSchema};
use crate::digest::estimate_tokens;

#[derive(Debug, Clone, Copy)]
pub struct CompletionRequest<'a> {
    pub role: RoleName,
    pub model_id: &'a str,
    pub history: &'a [ChatTurn],
    pub tools: &'a [ToolSchema],
}

impl CompletionRequest<'_> {
    /// Canonical serialization of what is sent to a provider.
    pub fn payload(&self) -> String {
        serde_json::json!({
            "model": self.model_id,
            "messages": self.history,
            "tools": self.tools.iter().map(|t| &t.name).collect::<Vec<_>>(),
        })
        .to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProviderReply {
    pub turn: ChatTurn,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ProviderError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("unparseable provider response: {0}")]
    BadResponse(String),
    #[error("missing API key: set {0}")]
    MissingKey(String),
    #[error("mock script exhausted for role {0}")]
    ScriptExhausted(RoleName),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        match self {
            ProviderError::Transport(_) => true,
            ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatProvider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ProviderReply, ProviderError>;

    /// Pre-flight token estimate `(prompt, completion)` used for the spend check.
    fn estimate_usage(&self, req: &CompletionRequest<'_>) -> (u64, u64) {
        let prompt = req.history.iter().map(|t| estimate_tokens(&t.content)).sum();
        (prompt, 0)
    }
}

/// Chat providers registered by name; role bindings refer to these names.
#[derive(Clone, Default)]
pub struct ProviderRegistry {
    providers: BTreeMap<String, Arc<dyn ChatProvider>>,
}

impl ProviderRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: impl Into<String>, provider: Arc<dyn ChatProvider>) {
        self.providers.insert(name.into(), provider);
    }

    pub fn with(mut self, name: impl Into<String>, provider: Arc<dyn ChatProvider>) -> Self {
        self.register(name, provider);
        self
    }

    pub fn get(&self, name: &str) -> Option<&Arc<dyn ChatProvider>> {
        self.providers.get(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.providers.contains_key(name)
    }

    pub fn names(&self) -> Vec<&str> {
        self.providers.keys().map(String::as_str).collect()
    }
}

impl std::fmt::Debug for ProviderRegistry {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_list().entries(self.providers.keys()).finish()
    }
}
