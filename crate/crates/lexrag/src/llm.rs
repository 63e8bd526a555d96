//! Chat model clients: an HTTP client for the chat-completions convention
//! and a scripted model for deterministic runs.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    pub arguments: Value,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::System, content: text.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::User, content: text.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Assistant, content: text.into(), tool_calls: Vec::new(), tool_call_id: None }
    }

    pub fn tool_call(call: ToolCall) -> Self {
        ChatMessage { role: Role::Assistant, content: String::new(), tool_calls: vec![call], tool_call_id: None }
    }

    pub fn tool_result(call_id: impl Into<String>, text: impl Into<String>) -> Self {
        ChatMessage { role: Role::Tool, content: text.into(), tool_calls: Vec::new(), tool_call_id: Some(call_id.into()) }
    }
}

/// A function the model may call: name, description and JSON schema of
/// its arguments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decoding {
    pub temperature: f64,
    pub top_p: f64,
}

/// Either tool calls or final text.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AssistantReply {
    #[serde(default)]
    pub content: String,
    #[serde(default)]
    pub tool_calls: Vec<ToolCall>,
}

impl AssistantReply {
    pub fn text(text: impl Into<String>) -> Self {
        AssistantReply { content: text.into(), tool_calls: Vec::new() }
    }

    pub fn call(name: &str, arguments: Value) -> Self {
        AssistantReply {
            content: String::new(),
            tool_calls: vec![ToolCall { id: String::new(), name: name.to_owned(), arguments }],
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum LlmError {
    #[error("chat request failed: {0}")]
    Transport(String),
    #[error("chat service returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed chat response: {0}")]
    Malformed(String),
    #[error("scripted model has no reply left")]
    ScriptExhausted,
}

impl LlmError {
    /// Transport-level failures worth retrying.
    pub fn is_transient(&self) -> bool {
        match self {
            LlmError::Transport(_) => true,
            LlmError::Status { status, .. } => *status == 429 || *status >= 500,
            _ => false,
        }
    }
}

pub trait ChatModel: Send + Sync {
    fn chat(&self, messages: &[ChatMessage], tools: &[ToolSpec], decoding: Decoding) -> Result<AssistantReply, LlmError>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    /// Full URL of the chat-completions endpoint.
    pub url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout_secs: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        LlmSettings {
            url: "http://127.0.0.1:8000/v1/chat/completions".into(),
            model: "qwen3.5-plus".into(),
            api_key: None,
            timeout_secs: 120,
        }
    }
}

pub struct HttpChatModel {
    client: reqwest::blocking::Client,
    settings: LlmSettings,
}

impl HttpChatModel {
    pub fn new(settings: LlmSettings) -> Result<Self, LlmError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport(e.to_string()))?;
        Ok(HttpChatModel { client, settings })
    }
}

fn wire_message(m: &ChatMessage) -> Value {
    let mut v = json!({ "role": m.role, "content": m.content });
    if !m.tool_calls.is_empty() {
        v["tool_calls"] = m
            .tool_calls
            .iter()
            .map(|c| {
                json!({
                    "id": c.id,
                    "type": "function",
                    "function": { "name": c.name, "arguments": c.arguments.to_string() },
                })
            })
            .collect();
    }
    if let Some(id) = &m.tool_call_id {
        v["tool_call_id"] = json!(id);
    }
    v
}

/// Extracts the first choice of a chat-completions response.
pub fn parse_chat_response(body: &Value) -> Result<AssistantReply, LlmError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| LlmError::Malformed("no choices[0].message".into()))?;
    let content = message.get("content").and_then(Value::as_str).unwrap_or_default().to_owned();
    let mut tool_calls = Vec::new();
    if let Some(calls) = message.get("tool_calls").and_then(Value::as_array) {
        for (i, call) in calls.iter().enumerate() {
            let name = call
                .pointer("/function/name")
                .and_then(Value::as_str)
                .ok_or_else(|| LlmError::Malformed("tool call without a function name".into()))?;
            // arguments arrive as a JSON-encoded string; keep undecodable text
            // as a string so the tool can report the problem to the model
            let arguments = match call.pointer("/function/arguments") {
                Some(Value::String(s)) => serde_json::from_str(s).unwrap_or_else(|_| Value::String(s.clone())),
                Some(other) => other.clone(),
                None => json!({}),
            };
            let id = call.get("id").and_then(Value::as_str).map_or_else(|| format!("call_{i}"), str::to_owned);
            tool_calls.push(ToolCall { id, name: name.to_owned(), arguments });
        }
    }
    Ok(AssistantReply { content, tool_calls })
}

impl ChatModel for HttpChatModel {
    fn chat(&self, messages: &[ChatMessage], tools: &[ToolSpec], decoding: Decoding) -> Result<AssistantReply, LlmError> {
        let mut body = json!({
            "model": self.settings.model,
            "messages": messages.iter().map(wire_message).collect::<Vec<_>>(),
            "temperature": decoding.temperature,
            "top_p": decoding.top_p,
        });
        if !tools.is_empty() {
            body["tools"] = tools
                .iter()
                .map(|t| json!({"type": "function", "function": {"name": t.name, "description": t.description, "parameters": t.parameters}}))
                .collect();
        }
        let mut req = self.client.post(&self.settings.url).json(&body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| LlmError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            return Err(LlmError::Status { status: status.as_u16(), body: resp.text().unwrap_or_default() });
        }
        let value: Value = resp.json().map_err(|e| LlmError::Malformed(e.to_string()))?;
        parse_chat_response(&value)
    }
}

type ReplyFn = dyn Fn(&[ChatMessage], &[ToolSpec]) -> Result<AssistantReply, LlmError> + Send + Sync;

/// Deterministic model for tests and replays: either a fixed queue of
/// replies or a function of the conversation so far. Every request is
/// recorded.
pub struct ScriptedModel {
    queue: Mutex<VecDeque<Result<AssistantReply, LlmError>>>,
    fallback: Option<Box<ReplyFn>>,
    seen: Mutex<Vec<(Vec<ChatMessage>, Decoding)>>,
}

impl ScriptedModel {
    pub fn new(replies: impl IntoIterator<Item = AssistantReply>) -> Self {
        Self::with_results(replies.into_iter().map(Ok))
    }

    pub fn with_results(replies: impl IntoIterator<Item = Result<AssistantReply, LlmError>>) -> Self {
        ScriptedModel { queue: Mutex::new(replies.into_iter().collect()), fallback: None, seen: Mutex::new(Vec::new()) }
    }

    /// Answers every request with `f` once the queue is empty.
    pub fn from_fn(f: impl Fn(&[ChatMessage], &[ToolSpec]) -> Result<AssistantReply, LlmError> + Send + Sync + 'static) -> Self {
        ScriptedModel { queue: Mutex::new(VecDeque::new()), fallback: Some(Box::new(f)), seen: Mutex::new(Vec::new()) }
    }

    pub fn requests(&self) -> Vec<(Vec<ChatMessage>, Decoding)> {
        self.seen.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().unwrap().len()
    }
}

impl ChatModel for ScriptedModel {
    fn chat(&self, messages: &[ChatMessage], tools: &[ToolSpec], decoding: Decoding) -> Result<AssistantReply, LlmError> {
        self.seen.lock().unwrap().push((messages.to_vec(), decoding));
        if let Some(next) = self.queue.lock().unwrap().pop_front() {
            return next;
        }
        match &self.fallback {
            Some(f) => f(messages, tools),
            None => Err(LlmError::ScriptExhausted),
        }
    }
}
