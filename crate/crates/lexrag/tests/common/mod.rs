#![allow(dead_code)]

use lexrag::core::analyze;
use lexrag::core::eval::QaExample;
use lexrag::core::{build_index, Document, IndexSnapshot};
use lexrag::corpus::{ingest_jsonl, read_qa_jsonl};
use lexrag::embed::{EmbedError, Embedder};
use lexrag::llm::{AssistantReply, ChatMessage, Role};
use serde_json::json;
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

pub const DIM: usize = 64;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

pub fn mini_corpus() -> Vec<Document> {
    ingest_jsonl(&fixture("mini_corpus.jsonl")).expect("mini corpus loads")
}

pub fn mini_qa() -> Vec<QaExample> {
    read_qa_jsonl(&fixture("qa.jsonl")).expect("qa fixture loads")
}

pub fn mini_index() -> Arc<IndexSnapshot> {
    Arc::new(build_index(mini_corpus()).unwrap())
}

fn fnv(token: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Hashed bag-of-words vector: deterministic, and texts that share words
/// point in similar directions.
pub fn hash_embedding(text: &str) -> Vec<f32> {
    let mut v = vec![0f32; DIM];
    for token in analyze(text) {
        let h = fnv(&token);
        let sign = if h & 1 == 0 { 1.0 } else { -1.0 };
        v[(h >> 1) as usize % DIM] += sign;
    }
    if v.iter().all(|x| *x == 0.0) {
        v[0] = 1.0;
    }
    v
}

/// In-process stand-in for an embedding service.
#[derive(Default)]
pub struct HashEmbedder {
    pub calls: AtomicUsize,
    pub texts: AtomicUsize,
    /// Simulated service time per call.
    pub delay: Duration,
}

impl HashEmbedder {
    pub fn with_delay(delay: Duration) -> Self {
        HashEmbedder { delay, ..Default::default() }
    }
}

impl Embedder for HashEmbedder {
    fn embed(&self, texts: &[String], _as_query: bool) -> Result<Vec<Vec<f32>>, EmbedError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.texts.fetch_add(texts.len(), Ordering::SeqCst);
        if !self.delay.is_zero() {
            std::thread::sleep(self.delay);
        }
        Ok(texts.iter().map(|t| hash_embedding(t)).collect())
    }
}

pub struct FailingEmbedder;

impl Embedder for FailingEmbedder {
    fn embed(&self, _: &[String], _: bool) -> Result<Vec<Vec<f32>>, EmbedError> {
        Err(EmbedError::Transport("connection refused".into()))
    }
}

/// A JSON-over-HTTP endpoint on an ephemeral port: every POST to `path`
/// is answered by `handler` after `delay`. Stops when dropped.
pub struct MockEndpoint {
    pub url: String,
    shutdown: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl MockEndpoint {
    pub fn start(path: &str, delay: Duration, handler: impl Fn(serde_json::Value) -> serde_json::Value + Send + Sync + 'static) -> Self {
        use axum::routing::post;
        use axum::Json;
        let handler = Arc::new(handler);
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        listener.set_nonblocking(true).unwrap();
        let addr = listener.local_addr().unwrap();
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let rt = tokio::runtime::Runtime::new().unwrap();
        let route = path.to_owned();
        let thread = std::thread::spawn(move || {
            rt.block_on(async move {
                let app = axum::Router::new().route(
                    &route,
                    post(move |Json(body): Json<serde_json::Value>| {
                        let handler = handler.clone();
                        async move {
                            let reply = tokio::task::spawn_blocking(move || {
                                std::thread::sleep(delay);
                                handler(body)
                            })
                            .await
                            .unwrap();
                            Json(reply)
                        }
                    }),
                );
                let listener = tokio::net::TcpListener::from_std(listener).unwrap();
                let _ = axum::serve(listener, app)
                    .with_graceful_shutdown(async {
                        let _ = rx.await;
                    })
                    .await;
            });
        });
        MockEndpoint { url: format!("http://{addr}{path}"), shutdown: Some(tx), thread: Some(thread) }
    }
}

impl Drop for MockEndpoint {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

/// Embedding service answering with hash embeddings.
pub fn mock_embedding_service(delay: Duration) -> MockEndpoint {
    MockEndpoint::start("/v1/embeddings", delay, |body| {
        let inputs = body["input"].as_array().cloned().unwrap_or_default();
        let data: Vec<_> = inputs.iter().map(|t| json!({"embedding": hash_embedding(t.as_str().unwrap_or(""))})).collect();
        json!({"data": data})
    })
}

fn chat_reply(content: &str, call: Option<(&str, serde_json::Value)>) -> serde_json::Value {
    let mut message = json!({"role": "assistant", "content": content});
    if let Some((name, args)) = call {
        message["tool_calls"] = json!([{"id": "c1", "type": "function", "function": {"name": name, "arguments": args.to_string()}}]);
    }
    json!({"choices": [{"index": 0, "message": message}]})
}

/// Chat-completions service that replays the Vivaldi trajectory for any
/// question and grades every answer correct.
pub fn mock_chat_service() -> MockEndpoint {
    MockEndpoint::start("/v1/chat/completions", Duration::ZERO, |body| {
        let messages = body["messages"].as_array().cloned().unwrap_or_default();
        let last = messages.last().and_then(|m| m["content"].as_str()).unwrap_or("");
        if last.ends_with("Verdict:") {
            return chat_reply("correct", None);
        }
        if body.get("tools").is_none() {
            return chat_reply("Find who was born on 4 March 1678.", None);
        }
        match messages.iter().filter(|m| m["role"] == "tool").count() {
            0 => chat_reply("", Some(("search", json!({"query": "born 4 March 1678", "default_operator": "AND"})))),
            1 => chat_reply("", Some(("search", json!({"query": "Antonio Vivaldi operas Italian libretto"})))),
            _ => chat_reply("", Some(("answer", json!({"answer": "Antonio Vivaldi"})))),
        }
    })
}

pub fn tool_results(messages: &[ChatMessage]) -> Vec<&str> {
    messages.iter().filter(|m| m.role == Role::Tool).map(|m| m.content.as_str()).collect()
}

pub fn search(query: &str, op: &str) -> AssistantReply {
    AssistantReply::call("search", json!({"query": query, "default_operator": op}))
}

pub fn answer(text: &str) -> AssistantReply {
    AssistantReply::call("answer", json!({"answer": text}))
}

pub fn refuse() -> AssistantReply {
    AssistantReply::call("answer", json!({"answer": "", "refuse": true}))
}
