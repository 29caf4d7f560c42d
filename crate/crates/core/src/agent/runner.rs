use serde_json::Value;

use super::transcript::{AgentOutcome, AgentTranscript, TranscriptEvent};
use super::{AgentSpec, ContextBlocks};
use crate::llm::{Budget, ChatTurn, FormatError, Gateway, GatewayError, ToolSchema};
use crate::sandbox::{SandboxHandle, ToolRegistry};

/// Everything an agent run needs besides its spec and context.
#[derive(Debug, Clone, Copy)]
pub struct AgentEnv<'a> {
    pub gateway: &'a Gateway,
    pub tools: &'a ToolRegistry,
    pub budget: &'a Budget,
    pub sandbox: &'a SandboxHandle,
    pub review_tokens: u64,
    /// Run-wide ceiling on tool calls per agent; specs may ask for fewer.
    pub tool_call_cap: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentRun {
    pub transcript: AgentTranscript,
    pub answer: Option<Value>,
    pub outcome: AgentOutcome,
}

impl AgentRun {
    pub fn error(&self) -> Option<&str> {
        self.transcript.error()
    }
}

pub(crate) fn system_prompt(spec: &AgentSpec) -> String {
    format!(
        "{}\n\nWhen you have finished, reply without tool calls. {}",
        spec.system_prompt.trim_end(),
        spec.schema.describe()
    )
}

pub fn run_agent(env: AgentEnv<'_>, spec: &AgentSpec, ctx: &ContextBlocks) -> AgentRun {
    let schemas: Vec<ToolSchema> = spec
        .toolset
        .iter()
        .filter_map(|n| env.tools.get(n))
        .map(|t| t.schema())
        .collect();
    let mut t = AgentTranscript::default();
    t.push(TranscriptEvent::Start {
        agent: spec.name().to_string(),
        role: spec.role,
        model_id: env.gateway.bindings().get(spec.role).model_id.clone(),
        tools: schemas.iter().map(|s| s.name.clone()).collect(),
        max_tool_calls: spec.max_tool_calls.min(env.tool_call_cap),
    });
    let mut history = vec![ChatTurn::system(system_prompt(spec)), ChatTurn::user(ctx.render())];
    for turn in &history {
        t.push(TranscriptEvent::Turn {
            turn: turn.clone(),
            usage: None,
        });
    }

    let max_calls = spec.max_tool_calls.min(env.tool_call_cap);
    let mut executed = 0usize;
    let finish = |mut t: AgentTranscript, outcome, executed, answer: Option<Value>, error: Option<String>| {
        t.push(TranscriptEvent::End {
            outcome,
            tool_calls_made: executed,
            final_answer: answer.clone(),
            error,
        });
        AgentRun {
            transcript: t,
            answer,
            outcome,
        }
    };

    loop {
        let (reply, usage) = match env.gateway.complete(spec.role, &history, &schemas, env.budget) {
            Ok(r) => r,
            Err(e) => {
                let outcome = gateway_outcome(&e);
                return finish(t, outcome, executed, None, Some(e.to_string()));
            }
        };
        t.push(TranscriptEvent::Turn {
            turn: reply.clone(),
            usage: Some(usage),
        });
        history.push(reply.clone());

        if reply.tool_calls.is_empty() || spec.single_turn {
            return match env.gateway.enforce_format(&reply.content, &spec.schema, env.budget) {
                Ok(answer) => {
                    let gave_up = spec
                        .schema
                        .decision_field
                        .and_then(|f| answer.get(f))
                        .and_then(Value::as_bool)
                        == Some(false);
                    let outcome = if gave_up {
                        AgentOutcome::GaveUp
                    } else {
                        AgentOutcome::FinalAnswer
                    };
                    finish(t, outcome, executed, Some(answer), None)
                }
                Err(FormatError::Gateway(e)) => finish(t, gateway_outcome(&e), executed, None, Some(e.to_string())),
                Err(e) => finish(t, AgentOutcome::FormatError, executed, None, Some(e.to_string())),
            };
        }

        let mut stop: Option<(AgentOutcome, String)> = None;
        for call in &reply.tool_calls {
            let rejection = if stop.is_some() {
                Some("not executed: the run has ended".to_string())
            } else if !spec.toolset.iter().any(|n| n == &call.tool_name) {
                Some(format!(
                    "ToolNotPermitted: `{}` is not available to this agent (allowed: {})",
                    call.tool_name,
                    if spec.toolset.is_empty() { "none".to_string() } else { spec.toolset.join(", ") }
                ))
            } else if executed >= max_calls {
                let msg = format!("tool call limit of {max_calls} reached; call rejected");
                stop = Some((AgentOutcome::CapExhausted, msg.clone()));
                Some(msg)
            } else if let Err(hit) = env.budget.check_deadline() {
                let e = GatewayError::from(hit);
                stop = Some((gateway_outcome(&e), e.to_string()));
                Some(format!("not executed: {e}"))
            } else {
                None
            };

            let (content, ok, command, ran) = match rejection.clone() {
                Some(msg) => (msg, false, None, false),
                None => {
                    let tool = env.tools.get(&call.tool_name).expect("toolset validated");
                    let result = tool.invoke(env.sandbox, &call.arguments);
                    executed += 1;
                    (result.render(), result.ok, result.command.clone(), true)
                }
            };
            t.push(TranscriptEvent::Dispatch {
                call_id: call.call_id.clone(),
                tool_name: call.tool_name.clone(),
                executed: ran,
                ok,
                rejection,
                command,
            });
            let turn = ChatTurn::tool_result(call.call_id.clone(), content);
            t.push(TranscriptEvent::Turn {
                turn: turn.clone(),
                usage: None,
            });
            history.push(turn);
        }
        if let Some((outcome, msg)) = stop {
            return finish(t, outcome, executed, None, Some(msg));
        }
    }
}

fn gateway_outcome(e: &GatewayError) -> AgentOutcome {
    match e {
        GatewayError::BudgetExceeded => AgentOutcome::BudgetExhausted,
        GatewayError::DeadlineExceeded => AgentOutcome::DeadlineExhausted,
        _ => AgentOutcome::ProviderError,
    }
}
