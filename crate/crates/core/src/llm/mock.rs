//! Scripted chat backend replaying canned assistant turns per role.
//!
//! A script directory holds one `<role>.json` file per role, each a JSON array
//! of turns. A turn is either a bare string (final text) or an object:
//!
//! ```json
//! {"content": "...", "answer": {...}, "tool_calls": [{"name": "get_file", "arguments": {...}}],
//!  "usage": {"prompt_tokens": 10, "completion_tokens": 5}, "delay_ms": 0}
//! ```
//!
//! `answer` is serialized as the turn content. Missing role files mean the role
//! has no scripted turns; any call for it fails with `ScriptExhausted`.

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::provider::{ChatProvider, CompletionRequest, ProviderError, ProviderReply};
use super::types::{Author, ChatTurn, RoleName, ToolInvocationRequest};
use crate::digest::estimate_tokens;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedCall {
    pub name: String,
    #[serde(default)]
    pub arguments: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ScriptedTurn {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub answer: Option<serde_json::Value>,
    #[serde(default)]
    pub tool_calls: Vec<ScriptedCall>,
    #[serde(default)]
    pub usage: Option<ScriptedUsage>,
    #[serde(default)]
    pub delay_ms: u64,
}

impl ScriptedTurn {
    pub fn text(content: impl Into<String>) -> Self {
        Self {
            content: content.into(),
            ..Default::default()
        }
    }

    pub fn answer(value: serde_json::Value) -> Self {
        Self {
            answer: Some(value),
            ..Default::default()
        }
    }

    pub fn call(name: &str, arguments: serde_json::Value) -> Self {
        Self {
            tool_calls: vec![ScriptedCall {
                name: name.to_string(),
                arguments: arguments.as_object().cloned().unwrap_or_default(),
            }],
            ..Default::default()
        }
    }

    pub fn with_usage(mut self, prompt_tokens: u64, completion_tokens: u64) -> Self {
        self.usage = Some(ScriptedUsage {
            prompt_tokens,
            completion_tokens,
        });
        self
    }

    pub fn with_delay(mut self, delay_ms: u64) -> Self {
        self.delay_ms = delay_ms;
        self
    }

    fn body(&self) -> String {
        match &self.answer {
            Some(v) => serde_json::to_string_pretty(v).unwrap_or_default(),
            None => self.content.clone(),
        }
    }

    fn usage_for(&self, req: &CompletionRequest<'_>) -> (u64, u64) {
        match &self.usage {
            Some(u) => (u.prompt_tokens, u.completion_tokens),
            None => {
                let prompt = req.history.iter().map(|t| estimate_tokens(&t.content)).sum();
                let args: u64 = self
                    .tool_calls
                    .iter()
                    .map(|c| estimate_tokens(&serde_json::Value::Object(c.arguments.clone()).to_string()))
                    .sum();
                (prompt, estimate_tokens(&self.body()) + args)
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum TurnFile {
    Text(String),
    Turn(ScriptedTurn),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordedCall {
    pub role: RoleName,
    pub payload: String,
}

#[derive(Debug, Default)]
pub struct MockProvider {
    scripts: Mutex<BTreeMap<RoleName, VecDeque<ScriptedTurn>>>,
    calls: Mutex<Vec<RecordedCall>>,
}

impl MockProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_scripts(scripts: impl IntoIterator<Item = (RoleName, Vec<ScriptedTurn>)>) -> Self {
        let mock = Self::new();
        for (role, turns) in scripts {
            mock.push(role, turns);
        }
        mock
    }

    pub fn load_dir(dir: &Path) -> std::io::Result<Self> {
        Self::load_layered(&[dir])
    }

    /// Per role, the first directory holding `<role>.json` wins.
    pub fn load_layered(dirs: &[&Path]) -> std::io::Result<Self> {
        let mock = Self::new();
        for role in RoleName::ALL {
            let Some(path) = dirs.iter().map(|d| d.join(format!("{role}.json"))).find(|p| p.is_file()) else {
                continue;
            };
            let text = std::fs::read_to_string(&path)?;
            let turns: Vec<TurnFile> = serde_json::from_str(&text).map_err(|e| {
                std::io::Error::new(
                    std::io::ErrorKind::InvalidData,
                    format!("{}: {e}", path.display()),
                )
            })?;
            mock.push(
                role,
                turns.into_iter().map(|t| match t {
                    TurnFile::Text(s) => ScriptedTurn::text(s),
                    TurnFile::Turn(t) => t,
                }),
            );
        }
        Ok(mock)
    }

    pub fn push(&self, role: RoleName, turns: impl IntoIterator<Item = ScriptedTurn>) {
        self.scripts.lock().unwrap().entry(role).or_default().extend(turns);
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.calls.lock().unwrap().clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap().len()
    }

    pub fn calls_for(&self, role: RoleName) -> usize {
        self.calls.lock().unwrap().iter().filter(|c| c.role == role).count()
    }

    pub fn remaining(&self, role: RoleName) -> usize {
        self.scripts.lock().unwrap().get(&role).map_or(0, VecDeque::len)
    }
}

impl ChatProvider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ProviderReply, ProviderError> {
        let next = self
            .scripts
            .lock()
            .unwrap()
            .get_mut(&req.role)
            .and_then(VecDeque::pop_front);
        let Some(turn) = next else {
            return Err(ProviderError::ScriptExhausted(req.role));
        };
        self.calls.lock().unwrap().push(RecordedCall {
            role: req.role,
            payload: req.payload(),
        });
        if turn.delay_ms > 0 {
            std::thread::sleep(Duration::from_millis(turn.delay_ms));
        }
        let (prompt_tokens, completion_tokens) = turn.usage_for(req);
        let n = self.calls_for(req.role);
        let tool_calls = turn
            .tool_calls
            .iter()
            .enumerate()
            .map(|(i, c)| ToolInvocationRequest {
                call_id: format!("call_{}_{n}_{i}", req.role),
                tool_name: c.name.clone(),
                arguments: c.arguments.clone(),
            })
            .collect();
        Ok(ProviderReply {
            turn: ChatTurn {
                author: Author::Assistant,
                content: turn.body(),
                tool_calls,
                tool_result_for: None,
            },
            prompt_tokens,
            completion_tokens,
        })
    }

    fn estimate_usage(&self, req: &CompletionRequest<'_>) -> (u64, u64) {
        self.scripts
            .lock()
            .unwrap()
            .get(&req.role)
            .and_then(|q| q.front())
            .map(|t| t.usage_for(req))
            .unwrap_or((0, 0))
    }
}
