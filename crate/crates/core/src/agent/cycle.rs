use serde_json::Value;

use super::runner::{run_agent, AgentEnv, AgentRun};
use super::transcript::{render_for_review, AgentOutcome, AgentTranscript};
use super::{AgentSpec, ContextBlocks, CritiqueVerdict};

pub struct CycleRequest<'a> {
    pub developer: &'a AgentSpec,
    pub critic: &'a AgentSpec,
    pub context: ContextBlocks,
    /// Extra material the critic sees (knowledge base, stage inputs).
    pub critic_context: ContextBlocks,
    pub max_feedback: usize,
    /// Mechanical checks on the developer answer; `Err(reason)` rejects
    /// the attempt without consulting the critic.
    pub audit: &'a dyn Fn(&Value) -> Result<(), String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleOutcome {
    pub answer: Option<Value>,
    pub accepted: bool,
    pub verdict: Option<CritiqueVerdict>,
    pub transcripts: Vec<AgentTranscript>,
    pub dev_runs: usize,
    pub critic_runs: usize,
    /// Outcome of the last developer or critic run that did not produce a usable answer.
    pub terminal: Option<AgentOutcome>,
    pub error: Option<String>,
}

pub fn run_dev_critic_cycle(env: AgentEnv<'_>, req: CycleRequest<'_>) -> CycleOutcome {
    let mut out = CycleOutcome {
        answer: None,
        accepted: false,
        verdict: None,
        transcripts: Vec::new(),
        dev_runs: 0,
        critic_runs: 0,
        terminal: None,
        error: None,
    };
    let mut ctx = req.context.clone();
    loop {
        let dev: AgentRun = run_agent(env, req.developer, &ctx);
        out.dev_runs += 1;
        out.transcripts.push(dev.transcript.clone());
        out.answer = dev.answer.clone();
        if dev.outcome != AgentOutcome::FinalAnswer {
            out.terminal = Some(dev.outcome);
            out.error = dev.error().map(String::from);
            return out;
        }
        let answer = dev.answer.clone().unwrap_or(Value::Null);

        let verdict = match (req.audit)(&answer) {
            Err(reason) => CritiqueVerdict::reject(reason),
            Ok(()) => {
                let critic_ctx = req
                    .critic_context
                    .clone()
                    .input(
                        "Developer transcript",
                        render_for_review(&dev.transcript, env.review_tokens),
                    )
                    .input(
                        "Developer final answer",
                        serde_json::to_string_pretty(&answer).unwrap_or_default(),
                    );
                let critic = run_agent(env, req.critic, &critic_ctx);
                out.critic_runs += 1;
                out.transcripts.push(critic.transcript.clone());
                match (critic.outcome, critic.answer) {
                    (AgentOutcome::FinalAnswer, Some(v)) => CritiqueVerdict::from_answer(&v),
                    (outcome, _) => {
                        out.terminal = Some(outcome);
                        out.error = critic.transcript.error().map(String::from);
                        return out;
                    }
                }
            }
        };

        out.accepted = verdict.accepted;
        let feedback = verdict.feedback.clone();
        out.verdict = Some(verdict);
        if out.accepted || out.dev_runs > req.max_feedback {
            return out;
        }
        ctx.feedback.push(feedback);
    }
}
