//! The controlled agent loop: plan, search, observe, repeat, then answer
//! or refuse.
//!
//! The conversation is rebuilt from the trajectory before every model call
//! (system prompt, question, plan, then one tool call and one tool result
//! per turn), so a trajectory alone determines what the model saw.

use crate::llm::{AssistantReply, ChatMessage, ChatModel, Decoding, LlmError, ToolCall, ToolSpec};
use crate::retrieval::{Backend, Retriever, ToolQuery};
use lexrag_core::eval::OutcomeKind;
use lexrag_core::{parse_query, DefaultOperator, ParseOptions};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

const LOGICAL_TOOL: &str = include_str!("../assets/logical_tool.txt");
const LOGICAL_TOOL_SYNTAX_ONLY: &str = include_str!("../assets/logical_tool_syntax_only.txt");
const HYBRID_TOOL: &str = include_str!("../assets/hybrid_tool.txt");

const PLAN_REQUEST: &str = "Before searching, write a short plan: which facts you need and in what order you will look for them. Do not call any tool yet.";
const FINAL_REQUEST: &str = "The search budget is used up. Call `answer` now with your best supported answer, or set refuse to true if the passages do not support one.";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolVariant {
    #[default]
    Full,
    SyntaxOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub backend: Backend,
    pub max_turns: u32,
    pub temperature: f64,
    pub top_p: f64,
    pub tool_description_variant: ToolVariant,
    pub allow_boolean_ops: bool,
    /// Results per search when the model does not ask for a count.
    pub default_max_results: usize,
    /// Extra attempts after a transient model failure.
    pub llm_retries: u32,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            backend: Backend::Logical,
            max_turns: 8,
            temperature: 0.6,
            top_p: 0.95,
            tool_description_variant: ToolVariant::Full,
            allow_boolean_ops: true,
            default_max_results: 5,
            llm_retries: 2,
        }
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.max_turns == 0 {
            return Err(AgentError::Config("max_turns must be at least 1".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(AgentError::Config("temperature must be a finite number >= 0".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(AgentError::Config("top_p must be in (0, 1]".into()));
        }
        if self.default_max_results == 0 {
            return Err(AgentError::Config("default_max_results must be at least 1".into()));
        }
        Ok(())
    }

    pub fn decoding(&self) -> Decoding {
        Decoding { temperature: self.temperature, top_p: self.top_p }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("agent configured for the {config} backend but given a {retriever} retriever")]
    BackendMismatch { config: Backend, retriever: Backend },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path} line {line}: {message}")]
    BadRecord { path: String, line: usize, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedDoc {
    pub doc_id: String,
    pub title: String,
}

/// One search call and what came back.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based.
    pub turn_index: u32,
    pub query: String,
    /// Arguments exactly as the model sent them.
    pub arguments: Value,
    pub parse_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub retrieved: Vec<RetrievedDoc>,
    /// Tool result text returned to the model.
    pub observation: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub question_id: String,
    pub question: String,
    pub backend: Backend,
    pub plan: String,
    pub turns: Vec<Turn>,
    pub outcome: OutcomeKind,
    /// Present iff the outcome is an answer.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl Trajectory {
    fn start(question_id: &str, question: &str, backend: Backend) -> Self {
        Trajectory {
            schema_version: TRAJECTORY_SCHEMA_VERSION,
            question_id: question_id.to_owned(),
            question: question.to_owned(),
            backend,
            plan: String::new(),
            turns: Vec::new(),
            outcome: OutcomeKind::TurnLimit,
            answer: None,
            diagnostic: None,
        }
    }

    /// Queries issued, in order.
    pub fn queries(&self) -> Vec<&str> {
        self.turns.iter().map(|t| t.query.as_str()).collect()
    }
}

/// Tool description text for a backend and ablation settings.
pub fn tool_description(backend: Backend, variant: ToolVariant, allow_boolean_ops: bool) -> String {
    let base = match (backend, variant) {
        (Backend::Logical, ToolVariant::Full) => LOGICAL_TOOL,
        (Backend::Logical, ToolVariant::SyntaxOnly) => LOGICAL_TOOL_SYNTAX_ONLY,
        (Backend::Hybrid, ToolVariant::Full) => HYBRID_TOOL,
        (Backend::Hybrid, ToolVariant::SyntaxOnly) => return drop_section(HYBRID_TOOL, "Search strategy:"),
    };
    if backend == Backend::Logical && !allow_boolean_ops {
        return without_boolean_ops(base);
    }
    base.to_owned()
}

fn drop_section(text: &str, header: &str) -> String {
    let mut out = String::new();
    let mut skipping = false;
    for line in text.lines() {
        if line == header {
            skipping = true;
            continue;
        }
        if skipping && line.trim().is_empty() {
            skipping = false;
            continue;
        }
        if !skipping {
            out.push_str(line);
            out.push('\n');
        }
    }
    out
}

fn without_boolean_ops(text: &str) -> String {
    let uses_ops = |l: &str| {
        l.contains("Boolean logic") || l.split_whitespace().any(|w| matches!(w, "AND" | "OR" | "NOT")) || l.contains('(')
    };
    let mut out = String::new();
    for line in text.lines() {
        if line.trim_start().starts_with("- default_operator") {
            out.push_str(line);
        } else if line.trim_start().starts_with("- Narrow with") {
            out.push_str("  - Narrow with phrase matching or fields when results are too broad.");
        } else if uses_ops(line) {
            continue;
        } else {
            out.push_str(line);
        }
        out.push('\n');
    }
    out.push_str("\nAND, OR, NOT and parentheses are not available; combine keywords, phrases, and field prefixes.\n");
    out
}

fn search_spec(backend: Backend, description: &str) -> ToolSpec {
    let mut properties = json!({
        "query": {"type": "string", "description": "The search query."},
        "max_results": {"type": "integer", "minimum": 1, "description": "Number of passages to return (default 5)."},
    });
    if backend == Backend::Logical {
        properties["default_operator"] = json!({
            "type": "string",
            "enum": ["AND", "OR"],
            "description": "Operator joining juxtaposed terms (default OR).",
        });
    }
    ToolSpec {
        name: "search".into(),
        description: description.to_owned(),
        parameters: json!({"type": "object", "properties": properties, "required": ["query"]}),
    }
}

fn answer_spec() -> ToolSpec {
    ToolSpec {
        name: "answer".into(),
        description: "Give the final answer. Set refuse to true when the retrieved passages do not contain the answer.".into(),
        parameters: json!({
            "type": "object",
            "properties": {
                "answer": {"type": "string", "description": "A short answer, e.g. an entity name."},
                "refuse": {"type": "boolean", "description": "True to decline answering."},
            },
        }),
    }
}

/// System prompt: role, protocol and the tool description.
pub fn system_prompt(config: &AgentConfig) -> String {
    format!(
        "You answer questions using only passages found with the `search` tool. Search step by step, \
         read the returned passages, and refine your queries. When the evidence is sufficient, call `answer` \
         with a short answer. If the passages do not contain the answer, call `answer` with refuse set to true. \
         You may search at most {} times.\n\nSearch tool:\n{}",
        config.max_turns,
        tool_description(config.backend, config.tool_description_variant, config.allow_boolean_ops)
    )
}

fn call_id(turn_index: u32) -> String {
    format!("call_{turn_index}")
}

/// Message sequence for the next model call: system prompt, question,
/// plan (if any), then a tool call and its result for each turn.
pub fn build_context(trajectory: &Trajectory, system: &str, question: &str) -> Vec<ChatMessage> {
    let mut messages = vec![ChatMessage::system(system), ChatMessage::user(question)];
    if !trajectory.plan.is_empty() {
        messages.push(ChatMessage::assistant(&trajectory.plan));
    }
    for turn in &trajectory.turns {
        let id = call_id(turn.turn_index);
        messages.push(ChatMessage::tool_call(ToolCall { id: id.clone(), name: "search".into(), arguments: turn.arguments.clone() }));
        messages.push(ChatMessage::tool_result(id, &turn.observation));
    }
    messages
}

fn chat_with_retry(
    llm: &dyn ChatModel,
    messages: &[ChatMessage],
    tools: &[ToolSpec],
    config: &AgentConfig,
) -> Result<AssistantReply, LlmError> {
    let mut attempt = 0;
    loop {
        match llm.chat(messages, tools, config.decoding()) {
            Err(e) if e.is_transient() && attempt < config.llm_retries => {
                tracing::warn!(attempt, error = %e, "chat call failed, retrying");
                attempt += 1;
            }
            other => return other,
        }
    }
}

struct SearchArgs {
    query: String,
    max_results: usize,
    default_operator: DefaultOperator,
}

fn parse_search_args(args: &Value, default_k: usize) -> Result<SearchArgs, String> {
    let obj = args.as_object().ok_or("arguments must be a JSON object")?;
    let query = obj.get("query").and_then(Value::as_str).ok_or("missing string argument `query`")?.to_owned();
    let max_results = match obj.get("max_results") {
        None | Some(Value::Null) => default_k,
        Some(v) => match v.as_u64() {
            Some(n) if n >= 1 => n as usize,
            _ => return Err("max_results must be a positive integer".into()),
        },
    };
    let default_operator = match obj.get("default_operator") {
        None | Some(Value::Null) => DefaultOperator::Or,
        Some(Value::String(s)) => s.parse().map_err(|_| format!("default_operator must be AND or OR, got `{s}`"))?,
        Some(_) => return Err("default_operator must be AND or OR".into()),
    };
    Ok(SearchArgs { query, max_results, default_operator })
}

fn render_hits(retriever: &dyn Retriever, hits: &[lexrag_core::Hit], total: usize) -> String {
    if hits.is_empty() {
        return "No passages matched the query.".into();
    }
    let mut out = format!("Showing {} of {} matching passages.\n", hits.len(), total);
    for (i, hit) in hits.iter().enumerate() {
        let content = retriever.document(&hit.doc_id).map_or(hit.snippet.as_str(), |d| d.content.as_str());
        out.push_str(&format!("\n[{}] doc_id: {}\ntitle: {}\ncontent: {}\n", i + 1, hit.doc_id, hit.title, content));
    }
    out
}

fn execute_search(call: &ToolCall, turn_index: u32, config: &AgentConfig, retriever: &dyn Retriever) -> Turn {
    let query_text = call.arguments.get("query").and_then(Value::as_str).unwrap_or_default().to_owned();
    let failed = |parse_ok: bool, error: String, observation: String| Turn {
        turn_index,
        query: query_text.clone(),
        arguments: call.arguments.clone(),
        parse_ok,
        error: Some(error),
        retrieved: Vec::new(),
        observation,
    };
    if call.name != "search" {
        let msg = format!("unknown tool `{}`", call.name);
        return failed(false, msg.clone(), format!("Error: {msg}. Available tools: search, answer."));
    }
    let args = match parse_search_args(&call.arguments, config.default_max_results) {
        Ok(a) => a,
        Err(msg) => return failed(false, msg.clone(), format!("Error: {msg}.")),
    };
    let mut query = ToolQuery::new(args.query, args.max_results);
    if config.backend == Backend::Logical {
        query = query.with_operator(args.default_operator);
        if !config.allow_boolean_ops {
            let opts = ParseOptions::default().with_default_operator(args.default_operator).without_boolean_ops();
            if let Err(e) = parse_query(&query.query, opts) {
                return failed(false, e.to_string(), format!("Query error: {e}. Fix the query and search again."));
            }
        }
    }
    match retriever.search(&query) {
        Ok(found) => Turn {
            turn_index,
            query: query.query,
            arguments: call.arguments.clone(),
            parse_ok: true,
            error: None,
            retrieved: found.result.hits.iter().map(|h| RetrievedDoc { doc_id: h.doc_id.clone(), title: h.title.clone() }).collect(),
            observation: render_hits(retriever, &found.result.hits, found.result.total_candidates),
        },
        Err(crate::retrieval::RetrievalError::Parse(e)) => {
            failed(false, e.to_string(), format!("Query error: {e}. Fix the query and search again."))
        }
        Err(crate::retrieval::RetrievalError::BooleanSyntax) => {
            let e = crate::retrieval::RetrievalError::BooleanSyntax.to_string();
            failed(false, e.clone(), format!("Query error: {e}."))
        }
        Err(e) => failed(true, e.to_string(), format!("Search failed: {e}. You may retry or rephrase.")),
    }
}

enum Final {
    Answer(String),
    Refusal,
}

fn read_answer(call: &ToolCall) -> Final {
    let refuse = call.arguments.get("refuse").and_then(Value::as_bool).unwrap_or(false);
    let text = call.arguments.get("answer").and_then(Value::as_str).map(str::trim).unwrap_or_default();
    if refuse || text.is_empty() {
        Final::Refusal
    } else {
        Final::Answer(text.to_owned())
    }
}

fn finish(mut t: Trajectory, f: Final) -> Trajectory {
    match f {
        Final::Answer(a) => {
            t.outcome = OutcomeKind::Answer;
            t.answer = Some(a);
        }
        Final::Refusal => t.outcome = OutcomeKind::Refusal,
    }
    t
}

fn abort(mut t: Trajectory, e: LlmError) -> Trajectory {
    t.outcome = OutcomeKind::Aborted;
    t.diagnostic = Some(e.to_string());
    t
}

/// Runs one question to completion. Model transport failures end the run
/// with an `aborted` outcome and a diagnostic rather than an error.
pub fn run_agent(
    question_id: &str,
    question: &str,
    config: &AgentConfig,
    retriever: &dyn Retriever,
    llm: &dyn ChatModel,
) -> Result<Trajectory, AgentError> {
    config.validate()?;
    if retriever.backend() != config.backend {
        return Err(AgentError::BackendMismatch { config: config.backend, retriever: retriever.backend() });
    }
    let system = system_prompt(config);
    let search = search_spec(config.backend, &tool_description(config.backend, config.tool_description_variant, config.allow_boolean_ops));
    let tools = [search, answer_spec()];
    let mut traj = Trajectory::start(question_id, question, config.backend);

    let mut plan_messages = build_context(&traj, &system, question);
    plan_messages.push(ChatMessage::user(PLAN_REQUEST));
    match chat_with_retry(llm, &plan_messages, &[], config) {
        Ok(reply) => traj.plan = reply.content.trim().to_owned(),
        Err(e) => return Ok(abort(traj, e)),
    }

    while (traj.turns.len() as u32) < config.max_turns {
        let reply = match chat_with_retry(llm, &build_context(&traj, &system, question), &tools, config) {
            Ok(r) => r,
            Err(e) => return Ok(abort(traj, e)),
        };
        if reply.tool_calls.is_empty() {
            let text = reply.content.trim();
            let f = if text.is_empty() { Final::Refusal } else { Final::Answer(text.to_owned()) };
            return Ok(finish(traj, f));
        }
        for call in &reply.tool_calls {
            if call.name == "answer" {
                return Ok(finish(traj, read_answer(call)));
            }
            // calls beyond the budget in a batch are dropped unanswered
            if traj.turns.len() as u32 >= config.max_turns {
                break;
            }
            let index = traj.turns.len() as u32 + 1;
            let turn = execute_search(call, index, config, retriever);
            tracing::debug!(turn = index, query = %turn.query, hits = turn.retrieved.len(), "search turn");
            traj.turns.push(turn);
        }
    }

    let mut final_messages = build_context(&traj, &system, question);
    final_messages.push(ChatMessage::user(FINAL_REQUEST));
    let reply = match chat_with_retry(llm, &final_messages, &tools[1..], config) {
        Ok(r) => r,
        Err(e) => return Ok(abort(traj, e)),
    };
    if let Some(call) = reply.tool_calls.iter().find(|c| c.name == "answer") {
        return Ok(finish(traj, read_answer(call)));
    }
    if reply.tool_calls.is_empty() && !reply.content.trim().is_empty() {
        let text = reply.content.trim().to_owned();
        return Ok(finish(traj, Final::Answer(text)));
    }
    traj.outcome = OutcomeKind::TurnLimit;
    Ok(traj)
}

/// Writes one JSON trajectory per line.
pub fn export_trajectories(trajectories: &[Trajectory], path: &Path) -> Result<(), AgentError> {
    let io = |source| AgentError::Io { path: path.display().to_string(), source };
    let mut w = BufWriter::new(File::create(path).map_err(io)?);
    for t in trajectories {
        serde_json::to_writer(&mut w, t).expect("trajectory serializes");
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn import_trajectories(path: &Path) -> Result<Vec<Trajectory>, AgentError> {
    let shown = path.display().to_string();
    let io = |source| AgentError::Io { path: shown.clone(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| AgentError::BadRecord { path: shown.clone(), line: i + 1, message };
        let t: Trajectory = serde_json::from_str(&line).map_err(|e| bad(e.to_string()))?;
        if t.schema_version != TRAJECTORY_SCHEMA_VERSION {
            return Err(bad(format!("unsupported trajectory schema version {}", t.schema_version)));
        }
        out.push(t);
    }
    Ok(out)
}
