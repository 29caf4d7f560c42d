use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::digest::estimate_tokens;
use crate::llm::{Author, ChatTurn, CompletionRequest, RoleName, ToolSchema, UsageEntry};
use crate::sandbox::CommandLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentOutcome {
    FinalAnswer,
    GaveUp,
    CapExhausted,
    BudgetExhausted,
    DeadlineExhausted,
    FormatError,
    ProviderError,
}

impl AgentOutcome {
    /// Outcomes that end the run without an answer the stage can use.
    pub fn is_terminal(self) -> bool {
        !matches!(self, AgentOutcome::FinalAnswer | AgentOutcome::GaveUp)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TranscriptEvent {
    Start {
        agent: String,
        role: RoleName,
        model_id: String,
        tools: Vec<String>,
        max_tool_calls: usize,
    },
    Turn {
        turn: ChatTurn,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        usage: Option<UsageEntry>,
    },
    Dispatch {
        call_id: String,
        tool_name: String,
        executed: bool,
        ok: bool,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        rejection: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        command: Option<CommandLog>,
    },
    End {
        outcome: AgentOutcome,
        tool_calls_made: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        final_answer: Option<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        error: Option<String>,
    },
}

/// Append-only record of one agent run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AgentTranscript {
    events: Vec<TranscriptEvent>,
}

impl AgentTranscript {
    pub(crate) fn push(&mut self, e: TranscriptEvent) {
        self.events.push(e);
    }

    pub fn events(&self) -> &[TranscriptEvent] {
        &self.events
    }

    pub fn agent(&self) -> &str {
        match self.events.first() {
            Some(TranscriptEvent::Start { agent, .. }) => agent,
            _ => "",
        }
    }

    pub fn turns(&self) -> impl Iterator<Item = &ChatTurn> {
        self.events.iter().filter_map(|e| match e {
            TranscriptEvent::Turn { turn, .. } => Some(turn),
            _ => None,
        })
    }

    fn end(&self) -> Option<(&AgentOutcome, &usize, &Option<Value>, &Option<String>)> {
        self.events.iter().rev().find_map(|e| match e {
            TranscriptEvent::End {
                outcome,
                tool_calls_made,
                final_answer,
                error,
            } => Some((outcome, tool_calls_made, final_answer, error)),
            _ => None,
        })
    }

    pub fn outcome(&self) -> Option<AgentOutcome> {
        self.end().map(|e| *e.0)
    }

    pub fn tool_calls_made(&self) -> usize {
        self.end().map_or_else(
            || {
                self.events
                    .iter()
                    .filter(|e| matches!(e, TranscriptEvent::Dispatch { executed: true, .. }))
                    .count()
            },
            |e| *e.1,
        )
    }

    pub fn final_answer(&self) -> Option<&Value> {
        self.end().and_then(|e| e.2.as_ref())
    }

    pub fn error(&self) -> Option<&str> {
        self.end().and_then(|e| e.3.as_deref())
    }

    pub fn rejected_calls(&self) -> usize {
        self.events
            .iter()
            .filter(|e| matches!(e, TranscriptEvent::Dispatch { executed: false, .. }))
            .count()
    }

    pub fn cost_usd(&self) -> f64 {
        self.events
            .iter()
            .filter_map(|e| match e {
                TranscriptEvent::Turn { usage: Some(u), .. } => Some(u.cost_usd),
                _ => None,
            })
            .sum()
    }

    pub fn write_jsonl(&self, path: &Path) -> std::io::Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        for e in &self.events {
            serde_json::to_writer(&mut f, e)?;
            f.write_all(b"\n")?;
        }
        f.flush()
    }

    pub fn read_jsonl(path: &Path) -> std::io::Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut events = Vec::new();
        for line in f.lines() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            events.push(serde_json::from_str(&line).map_err(std::io::Error::other)?);
        }
        Ok(Self { events })
    }

    /// Rebuilds the provider payload of every model call made in this run.
    pub fn replay_payloads(&self, tools: &[ToolSchema]) -> Vec<String> {
        let Some(TranscriptEvent::Start { role, model_id, .. }) = self.events.first() else {
            return Vec::new();
        };
        let mut history: Vec<ChatTurn> = Vec::new();
        let mut out = Vec::new();
        for turn in self.turns() {
            if turn.author == Author::Assistant {
                out.push(
                    CompletionRequest {
                        role: *role,
                        model_id,
                        history: &history,
                        tools,
                    }
                    .payload(),
                );
            }
            history.push(turn.clone());
        }
        out
    }

    pub fn tool_names(&self) -> Vec<String> {
        match self.events.first() {
            Some(TranscriptEvent::Start { tools, .. }) => tools.clone(),
            _ => Vec::new(),
        }
    }
}

/// Plain-text view of a developer run for a reviewer. Beyond `max_tokens`
/// the middle is cut, keeping the head and the tail.
pub fn render_for_review(t: &AgentTranscript, max_tokens: u64) -> String {
    let mut out = String::new();
    for e in t.events() {
        match e {
            TranscriptEvent::Turn { turn, .. } => match turn.author {
                Author::System | Author::User => {}
                Author::Assistant => {
                    if !turn.content.trim().is_empty() {
                        out.push_str(&format!("[assistant]\n{}\n", turn.content.trim()));
                    }
                    for c in &turn.tool_calls {
                        out.push_str(&format!(
                            "[tool call] {} {}\n",
                            c.tool_name,
                            Value::Object(c.arguments.clone())
                        ));
                    }
                }
                Author::Tool => out.push_str(&format!("[tool result]\n{}\n", turn.content)),
            },
            TranscriptEvent::End { outcome, tool_calls_made, .. } => {
                out.push_str(&format!(
                    "[run ended: {} after {tool_calls_made} tool calls]\n",
                    serde_json::to_value(outcome).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
                ));
            }
            _ => {}
        }
    }
    truncate_middle(&out, max_tokens)
}

pub(crate) fn truncate_middle(text: &str, max_tokens: u64) -> String {
    if estimate_tokens(text) <= max_tokens {
        return text.to_string();
    }
    let keep = (max_tokens as usize * 4).saturating_sub(80) / 2;
    let head_end = floor_char(text, keep);
    let tail_start = ceil_char(text, text.len() - keep);
    format!(
        "{}\n[... {} characters omitted ...]\n{}",
        &text[..head_end],
        tail_start - head_end,
        &text[tail_start..]
    )
}

fn floor_char(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i -= 1;
    }
    i
}

fn ceil_char(s: &str, mut i: usize) -> usize {
    while !s.is_char_boundary(i) {
        i += 1;
    }
    i
}
