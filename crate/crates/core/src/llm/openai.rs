//! OpenAI-compatible chat-completions backend with function calling.

use serde_json::{json, Value};

use super::provider::{ChatProvider, CompletionRequest, ProviderError, ProviderReply};
use super::types::{Author, ChatTurn, ToolInvocationRequest};
use crate::net::{HttpClient, HttpError};

#[derive(Debug, Clone)]
pub struct OpenAiCompatible {
    name: String,
    base_url: String,
    api_key: Option<String>,
    key_var: String,
    client: HttpClient,
}

impl OpenAiCompatible {
    /// Reads the API key from `CVEFORGE_<NAME>_KEY`. A missing key only fails
    /// when a call is actually made.
    pub fn from_env(name: &str, base_url: impl Into<String>, client: HttpClient) -> Self {
        let key_var = format!(
            "CVEFORGE_{}_KEY",
            name.to_ascii_uppercase().replace(['-', '.'], "_")
        );
        let api_key = std::env::var(&key_var).ok().filter(|k| !k.is_empty());
        Self {
            name: name.to_string(),
            base_url: base_url.into(),
            api_key,
            key_var,
            client,
        }
    }

    pub fn request_body(req: &CompletionRequest<'_>) -> Value {
        let messages: Vec<Value> = req.history.iter().map(encode_turn).collect();
        let mut body = json!({ "model": req.model_id, "messages": messages });
        if !req.tools.is_empty() {
            body["tools"] = req
                .tools
                .iter()
                .map(|t| {
                    json!({"type": "function", "function": {
                        "name": t.name, "description": t.description, "parameters": t.parameters}})
                })
                .collect();
        }
        body
    }

    pub fn parse_response(text: &str) -> Result<ProviderReply, ProviderError> {
        let v: Value =
            serde_json::from_str(text).map_err(|e| ProviderError::BadResponse(e.to_string()))?;
        let msg = v
            .pointer("/choices/0/message")
            .ok_or_else(|| ProviderError::BadResponse("no choices[0].message".into()))?;
        let content = msg.get("content").and_then(Value::as_str).unwrap_or_default().to_string();
        let mut tool_calls = Vec::new();
        for call in msg.get("tool_calls").and_then(Value::as_array).into_iter().flatten() {
            let call_id = call.get("id").and_then(Value::as_str).unwrap_or_default().to_string();
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            let raw_args = call.pointer("/function/arguments").and_then(Value::as_str).unwrap_or("{}");
            let arguments = match serde_json::from_str::<Value>(raw_args) {
                Ok(Value::Object(map)) => map,
                _ => {
                    let mut m = serde_json::Map::new();
                    m.insert("_unparsed".into(), Value::String(raw_args.to_string()));
                    m
                }
            };
            tool_calls.push(ToolInvocationRequest {
                call_id,
                tool_name: name,
                arguments,
            });
        }
        let usage = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(ProviderReply {
            turn: ChatTurn {
                author: Author::Assistant,
                content,
                tool_calls,
                tool_result_for: None,
            },
            prompt_tokens: usage("prompt_tokens"),
            completion_tokens: usage("completion_tokens"),
        })
    }
}

fn encode_turn(turn: &ChatTurn) -> Value {
    match turn.author {
        Author::System => json!({"role": "system", "content": turn.content}),
        Author::User => json!({"role": "user", "content": turn.content}),
        Author::Tool => json!({
            "role": "tool",
            "tool_call_id": turn.tool_result_for.clone().unwrap_or_default(),
            "content": turn.content,
        }),
        Author::Assistant => {
            let mut m = json!({"role": "assistant", "content": turn.content});
            if !turn.tool_calls.is_empty() {
                m["tool_calls"] = turn
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({"id": c.call_id, "type": "function", "function": {
                            "name": c.tool_name,
                            "arguments": Value::Object(c.arguments.clone()).to_string()}})
                    })
                    .collect();
            }
            m
        }
    }
}

impl ChatProvider for OpenAiCompatible {
    fn name(&self) -> &str {
        &self.name
    }

    fn complete(&self, req: &CompletionRequest<'_>) -> Result<ProviderReply, ProviderError> {
        let key = self
            .api_key
            .as_deref()
            .ok_or_else(|| ProviderError::MissingKey(self.key_var.clone()))?;
        let auth = format!("Bearer {key}");
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let text = self
            .client
            .post_json(&url, &[("Authorization", &auth)], &Self::request_body(req))
            .map_err(|e| match e {
                HttpError::Status { status, .. } => ProviderError::Http {
                    status,
                    body: e.to_string(),
                },
                HttpError::Transport { .. } => ProviderError::Transport(e.to_string()),
            })?;
        Self::parse_response(&text)
    }
}
