use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleName {
    KnowledgeBuilder,
    PrereqDeveloper,
    SetupDeveloper,
    SetupCritic,
    ExploitDeveloper,
    ExploitCritic,
    VerifierDeveloper,
    VerifierCritic,
    FormatCorrector,
}

impl RoleName {
    pub const ALL: [RoleName; 9] = [
        RoleName::KnowledgeBuilder,
        RoleName::PrereqDeveloper,
        RoleName::SetupDeveloper,
        RoleName::SetupCritic,
        RoleName::ExploitDeveloper,
        RoleName::ExploitCritic,
        RoleName::VerifierDeveloper,
        RoleName::VerifierCritic,
        RoleName::FormatCorrector,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            RoleName::KnowledgeBuilder => "knowledge_builder",
            RoleName::PrereqDeveloper => "prereq_developer",
            RoleName::SetupDeveloper => "setup_developer",
            RoleName::SetupCritic => "setup_critic",
            RoleName::ExploitDeveloper => "exploit_developer",
            RoleName::ExploitCritic => "exploit_critic",
            RoleName::VerifierDeveloper => "verifier_developer",
            RoleName::VerifierCritic => "verifier_critic",
            RoleName::FormatCorrector => "format_corrector",
        }
    }
}

impl fmt::Display for RoleName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RoleName {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        RoleName::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

/// USD per 1k tokens.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub prompt_per_1k: f64,
    pub completion_per_1k: f64,
}

impl Pricing {
    pub fn cost(&self, prompt_tokens: u64, completion_tokens: u64) -> f64 {
        prompt_tokens as f64 / 1000.0 * self.prompt_per_1k
            + completion_tokens as f64 / 1000.0 * self.completion_per_1k
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelRole {
    pub role: RoleName,
    pub provider: String,
    pub model_id: String,
    pub pricing: Pricing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Author {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocationRequest {
    pub call_id: String,
    pub tool_name: String,
    #[serde(default)]
    pub arguments: serde_json::Map<String, serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub author: Author,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolInvocationRequest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_result_for: Option<String>,
}

impl ChatTurn {
    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Author::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Author::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Author::Assistant, content)
    }

    pub fn tool_result(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            author: Author::Tool,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_result_for: Some(call_id.into()),
        }
    }

    fn plain(author: Author, content: impl Into<String>) -> Self {
        Self {
            author,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_result_for: None,
        }
    }
}

/// A tool as advertised to the model: name, description and JSON-schema parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSchema {
    pub name: String,
    pub description: String,
    pub parameters: serde_json::Value,
}
