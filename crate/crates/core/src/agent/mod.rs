//! Tool-using agent loop, transcripts, and the developer/critic review cycle.

mod cycle;
mod runner;
mod transcript;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::llm::{FieldKind, FieldSpec, OutputSchema, RoleName};
use crate::sandbox::{ToolRegistry, LINUX_COMMAND, SET_ENV, WRITE_FILE};

pub use cycle::{run_dev_critic_cycle, CycleOutcome, CycleRequest};
pub use runner::{run_agent, AgentEnv, AgentRun};
pub use transcript::{render_for_review, AgentOutcome, AgentTranscript, TranscriptEvent};

pub const DEFAULT_MAX_TOOL_CALLS: usize = 60;
/// Token budget for a developer transcript shown to a critic.
pub const DEFAULT_REVIEW_TOKENS: u64 = 12_000;

const MUTATING_TOOLS: &[&str] = &[WRITE_FILE, LINUX_COMMAND, SET_ENV];

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SpecError {
    #[error("agent {agent}: tool {tool} is not registered")]
    UnknownTool { agent: String, tool: String },
    #[error("agent {agent} is read-only but has mutating tool {tool}")]
    MutatingToolInReadOnly { agent: String, tool: String },
    #[error("critic {0} must not have tools")]
    CriticWithTools(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSpec {
    pub role: RoleName,
    pub system_prompt: String,
    pub toolset: Vec<String>,
    pub schema: OutputSchema,
    pub max_tool_calls: usize,
    pub read_only: bool,
    /// One completion, no tool loop; any tool requests are ignored.
    pub single_turn: bool,
}

impl AgentSpec {
    pub fn developer(role: RoleName, system_prompt: impl Into<String>, toolset: &[&str], schema: OutputSchema) -> Self {
        Self {
            role,
            system_prompt: system_prompt.into(),
            toolset: toolset.iter().map(|s| s.to_string()).collect(),
            schema,
            max_tool_calls: DEFAULT_MAX_TOOL_CALLS,
            read_only: false,
            single_turn: false,
        }
    }

    pub fn single_turn(role: RoleName, system_prompt: impl Into<String>, schema: OutputSchema) -> Self {
        Self {
            read_only: true,
            single_turn: true,
            max_tool_calls: 0,
            ..Self::developer(role, system_prompt, &[], schema)
        }
    }

    /// Developer limited to non-mutating tools.
    pub fn read_only(role: RoleName, system_prompt: impl Into<String>, toolset: &[&str], schema: OutputSchema) -> Self {
        Self {
            read_only: true,
            ..Self::developer(role, system_prompt, toolset, schema)
        }
    }

    pub fn critic(role: RoleName, system_prompt: impl Into<String>) -> Self {
        Self {
            read_only: true,
            ..Self::developer(role, system_prompt, &[], critique_schema())
        }
    }

    pub fn with_max_tool_calls(mut self, n: usize) -> Self {
        self.max_tool_calls = n;
        self
    }

    pub fn name(&self) -> &'static str {
        self.role.as_str()
    }

    pub fn is_critic(&self) -> bool {
        matches!(
            self.role,
            RoleName::SetupCritic | RoleName::ExploitCritic | RoleName::VerifierCritic
        )
    }

    pub fn validate(&self, tools: &ToolRegistry) -> Result<(), SpecError> {
        let agent = self.name().to_string();
        if self.is_critic() && !self.toolset.is_empty() {
            return Err(SpecError::CriticWithTools(agent));
        }
        for t in &self.toolset {
            if tools.get(t).is_none() {
                return Err(SpecError::UnknownTool { agent, tool: t.clone() });
            }
            if self.read_only && MUTATING_TOOLS.contains(&t.as_str()) {
                return Err(SpecError::MutatingToolInReadOnly { agent, tool: t.clone() });
            }
        }
        Ok(())
    }
}

/// User-turn material, always rendered in the same order: knowledge base,
/// stage inputs, then reviewer feedback.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ContextBlocks {
    pub knowledge_base: Option<String>,
    pub inputs: Vec<(String, String)>,
    pub feedback: Vec<String>,
}

impl ContextBlocks {
    pub fn with_kb(kb: impl Into<String>) -> Self {
        Self {
            knowledge_base: Some(kb.into()),
            ..Default::default()
        }
    }

    pub fn input(mut self, title: impl Into<String>, body: impl Into<String>) -> Self {
        self.inputs.push((title.into(), body.into()));
        self
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        if let Some(kb) = &self.knowledge_base {
            out.push_str("## CVE knowledge base\n");
            out.push_str(kb);
            out.push_str("\n\n");
        }
        for (title, body) in &self.inputs {
            out.push_str(&format!("## {title}\n{body}\n\n"));
        }
        for (i, fb) in self.feedback.iter().enumerate() {
            out.push_str(&format!("## Reviewer feedback on attempt {}\n{fb}\n\n", i + 1));
        }
        out.trim_end().to_string()
    }
}

pub fn critique_schema() -> OutputSchema {
    OutputSchema::new(
        "critique",
        vec![
            FieldSpec::required("analysis", FieldKind::Text, "what you checked and what you found"),
            FieldSpec::required("accepted", FieldKind::Bool, "true if the work is valid"),
            FieldSpec::optional(
                "feedback",
                FieldKind::Text,
                "concrete, actionable fixes for the developer (required when not accepted)",
            ),
        ],
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CritiqueVerdict {
    pub analysis: String,
    pub accepted: bool,
    pub feedback: String,
}

impl CritiqueVerdict {
    pub fn reject(feedback: impl Into<String>) -> Self {
        let feedback = feedback.into();
        Self {
            analysis: feedback.clone(),
            accepted: false,
            feedback,
        }
    }

    /// Builds a verdict from a validated critique answer. A rejection without
    /// feedback falls back to the analysis so the developer always gets text.
    pub fn from_answer(v: &Value) -> Self {
        let text = |k: &str| v.get(k).and_then(Value::as_str).unwrap_or("").trim().to_string();
        let accepted = v.get("accepted").and_then(Value::as_bool).unwrap_or(false);
        let analysis = text("analysis");
        let mut feedback = text("feedback");
        if !accepted && feedback.is_empty() {
            feedback = if analysis.is_empty() {
                "The reviewer rejected the attempt without details; re-check the work against the task.".into()
            } else {
                analysis.clone()
            };
        }
        Self {
            analysis,
            accepted,
            feedback,
        }
    }
}
