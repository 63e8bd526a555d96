//! Offline construction timing and closed-loop replay load generation.

use crate::agent::Trajectory;
use crate::embed::{build_dense_index, embed_corpus, EmbedError, Embedder};
use crate::retrieval::{Backend, Retriever, ToolQuery};
use lexrag_core::dense::DenseIndex;
use lexrag_core::stats::LatencySummary;
use lexrag_core::{build_index, DefaultOperator, Document, IndexError, IndexSnapshot};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("workload has no queries")]
    EmptyWorkload,
    #[error("concurrency levels must be at least 1")]
    BadConcurrency,
    #[error("warmup_count {warmup} leaves no measured requests out of {total}")]
    WarmupTooLarge { warmup: usize, total: usize },
    #[error("{path}: {message}")]
    Workload { path: String, message: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub name: String,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstructionReport {
    pub backend: Backend,
    pub documents: usize,
    pub phases: Vec<Phase>,
    /// Sum of the phase durations.
    pub total_seconds: f64,
}

impl ConstructionReport {
    fn new(backend: Backend, documents: usize, phases: Vec<Phase>) -> Self {
        let total_seconds = phases.iter().map(|p| p.seconds).sum();
        ConstructionReport { backend, documents, phases, total_seconds }
    }
}

fn phase<T>(phases: &mut Vec<Phase>, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    phases.push(Phase { name: name.to_owned(), seconds: start.elapsed().as_secs_f64() });
    out
}

/// Logical backend: building the inverted index is the only phase.
pub fn measure_logical(corpus: &[Document]) -> Result<(ConstructionReport, IndexSnapshot), BenchError> {
    let mut phases = Vec::new();
    let snapshot = phase(&mut phases, "inverted_index", || build_index(corpus.iter().cloned()))?;
    Ok((ConstructionReport::new(Backend::Logical, corpus.len(), phases), snapshot))
}

/// Hybrid backend: inverted index, passage embedding, dense index.
pub fn measure_hybrid(
    corpus: &[Document],
    embedder: &dyn Embedder,
    batch_size: usize,
) -> Result<(ConstructionReport, IndexSnapshot, DenseIndex), BenchError> {
    let mut phases = Vec::new();
    let snapshot = phase(&mut phases, "inverted_index", || build_index(corpus.iter().cloned()))?;
    let vectors = phase(&mut phases, "embedding", || embed_corpus(corpus, embedder, batch_size))?;
    let dense = phase(&mut phases, "dense_index", || build_dense_index(corpus, &vectors))?;
    Ok((ConstructionReport::new(Backend::Hybrid, corpus.len(), phases), snapshot, dense))
}

fn default_k() -> usize {
    5
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayQuery {
    pub backend: Backend,
    pub query: String,
    #[serde(default = "default_k")]
    pub max_results: usize,
    #[serde(default)]
    pub default_operator: DefaultOperator,
}

impl ReplayQuery {
    pub fn tool_query(&self) -> ToolQuery {
        ToolQuery::new(self.query.clone(), self.max_results).with_operator(self.default_operator)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplayWorkload {
    pub queries: Vec<ReplayQuery>,
    pub warmup_count: usize,
    pub concurrency_levels: Vec<usize>,
}

impl ReplayWorkload {
    pub fn new(queries: Vec<ReplayQuery>) -> Self {
        ReplayWorkload { queries, warmup_count: 0, concurrency_levels: vec![1, 16] }
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        if self.queries.is_empty() {
            return Err(BenchError::EmptyWorkload);
        }
        if self.concurrency_levels.is_empty() || self.concurrency_levels.contains(&0) {
            return Err(BenchError::BadConcurrency);
        }
        if self.warmup_count >= self.queries.len() {
            return Err(BenchError::WarmupTooLarge { warmup: self.warmup_count, total: self.queries.len() });
        }
        Ok(())
    }
}

pub fn read_workload_jsonl(path: &Path) -> Result<Vec<ReplayQuery>, BenchError> {
    let shown = path.display().to_string();
    let err = |message: String| BenchError::Workload { path: shown.clone(), message };
    let file = File::open(path).map_err(|e| err(e.to_string()))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| err(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| err(format!("line {}: {e}", i + 1)))?);
    }
    Ok(out)
}

/// Every executed search of the given trajectories, in order.
pub fn workload_from_trajectories(trajectories: &[Trajectory]) -> Vec<ReplayQuery> {
    trajectories
        .iter()
        .flat_map(|t| {
            t.turns.iter().filter(|turn| turn.parse_ok && turn.error.is_none()).map(move |turn| ReplayQuery {
                backend: t.backend,
                query: turn.query.clone(),
                max_results: turn.arguments.get("max_results").and_then(|v| v.as_u64()).map_or(5, |k| k as usize),
                default_operator: turn
                    .arguments
                    .get("default_operator")
                    .and_then(|v| v.as_str())
                    .and_then(|s| s.parse().ok())
                    .unwrap_or_default(),
            })
        })
        .collect()
}

/// Something a load generator can call.
pub trait LoadTarget: Sync {
    fn call(&self, query: &ReplayQuery) -> Result<(), String>;
}

/// Calls a retriever in process.
pub struct InProcess<'a>(pub &'a dyn Retriever);

impl LoadTarget for InProcess<'_> {
    fn call(&self, query: &ReplayQuery) -> Result<(), String> {
        self.0.search(&query.tool_query()).map(|_| ()).map_err(|e| e.to_string())
    }
}

/// Calls `POST {base}/v1/search` of a running service.
pub struct HttpTarget {
    client: reqwest::blocking::Client,
    url: String,
}

impl HttpTarget {
    pub fn new(base_url: &str, timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .pool_max_idle_per_host(64)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(HttpTarget { client, url: format!("{}/v1/search", base_url.trim_end_matches('/')) })
    }
}

impl LoadTarget for HttpTarget {
    fn call(&self, q: &ReplayQuery) -> Result<(), String> {
        let body = serde_json::json!({
            "query": q.query,
            "max_results": q.max_results,
            "default_operator": q.default_operator,
            "backend": q.backend,
        });
        let resp = self.client.post(&self.url).json(&body).send().map_err(|e| e.to_string())?;
        let status = resp.status();
        // read the body so the measured time covers the full response
        let text = resp.text().map_err(|e| e.to_string())?;
        if status.is_success() {
            Ok(())
        } else {
            Err(format!("HTTP {}: {text}", status.as_u16()))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyReport {
    pub backend: String,
    pub concurrency: usize,
    pub qps: f64,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    /// Successful measured requests; latency figures are zero when this is.
    pub count: usize,
    pub failures: usize,
    pub warmup: usize,
    pub elapsed_seconds: f64,
}

/// `clients` closed-loop workers draining `queries` in order; returns
/// per-request latencies of successes and the failure count.
fn drive(queries: &[ReplayQuery], clients: usize, target: &dyn LoadTarget) -> (Vec<f64>, usize) {
    let next = AtomicUsize::new(0);
    let results = Mutex::new((Vec::with_capacity(queries.len()), 0usize));
    std::thread::scope(|s| {
        for _ in 0..clients.min(queries.len()) {
            s.spawn(|| {
                let mut local = Vec::new();
                let mut failures = 0;
                loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(q) = queries.get(i) else { break };
                    let start = Instant::now();
                    match target.call(q) {
                        Ok(()) => local.push(start.elapsed().as_secs_f64() * 1e3),
                        Err(e) => {
                            tracing::debug!(query = %q.query, error = %e, "request failed");
                            failures += 1;
                        }
                    }
                }
                let mut all = results.lock().unwrap();
                all.0.extend(local);
                all.1 += failures;
            });
        }
    });
    results.into_inner().unwrap()
}

/// For each concurrency level: the first `warmup_count` queries are issued
/// and discarded, then the rest are replayed by that many closed-loop
/// clients. QPS is successful requests over the measured wall time.
pub fn replay_load(workload: &ReplayWorkload, target: &dyn LoadTarget, backend: &str) -> Result<Vec<LatencyReport>, BenchError> {
    workload.validate()?;
    let (warm, measured) = workload.queries.split_at(workload.warmup_count);
    let mut reports = Vec::new();
    for &c in &workload.concurrency_levels {
        drive(warm, c, target);
        let start = Instant::now();
        let (latencies, failures) = drive(measured, c, target);
        let elapsed = start.elapsed().as_secs_f64();
        let summary = LatencySummary::from_millis(&latencies).ok();
        let pick = |f: fn(&LatencySummary) -> f64| summary.as_ref().map_or(0.0, f);
        reports.push(LatencyReport {
            backend: backend.to_owned(),
            concurrency: c,
            qps: if elapsed > 0.0 { latencies.len() as f64 / elapsed } else { 0.0 },
            mean_ms: pick(|s| s.mean_ms),
            p50_ms: pick(|s| s.p50_ms),
            p95_ms: pick(|s| s.p95_ms),
            max_ms: pick(|s| s.max_ms),
            count: latencies.len(),
            failures,
            warmup: warm.len(),
            elapsed_seconds: elapsed,
        });
    }
    Ok(reports)
}
