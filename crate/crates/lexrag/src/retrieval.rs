//! The two retrieval backends behind the agent's search tool and the HTTP
//! service: logical (parsed query, exact Boolean candidates, BM25) and
//! hybrid (bag-of-terms BM25 plus dense search, fused by RRF).

use crate::embed::{EmbedError, Embedder};
use lexrag_core::dense::{DenseError, DenseIndex};
use lexrag_core::fusion::{bag_of_terms, contains_boolean_syntax, rrf_fuse, FusionConfig, FusionError};
use lexrag_core::query::ParseErrorKind;
use lexrag_core::search::{SearchError, SNIPPET_CHARS};
use lexrag_core::{
    parse_query, search_topk, Bm25Params, DefaultOperator, Document, Hit, IndexSnapshot, ParseError, ParseOptions,
    SearchRequest, SearchResult,
};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;
use std::time::{Duration, Instant};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    #[default]
    Logical,
    Hybrid,
}

impl Backend {
    pub fn as_str(self) -> &'static str {
        match self {
            Backend::Logical => "logical",
            Backend::Hybrid => "hybrid",
        }
    }
}

impl fmt::Display for Backend {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "logical" => Ok(Backend::Logical),
            "hybrid" => Ok(Backend::Hybrid),
            other => Err(format!("unknown backend `{other}` (expected logical or hybrid)")),
        }
    }
}

/// Arguments of one search call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToolQuery {
    pub query: String,
    pub max_results: usize,
    #[serde(default)]
    pub default_operator: DefaultOperator,
}

impl ToolQuery {
    pub fn new(query: impl Into<String>, max_results: usize) -> Self {
        ToolQuery { query: query.into(), max_results, default_operator: DefaultOperator::Or }
    }

    pub fn with_operator(mut self, op: DefaultOperator) -> Self {
        self.default_operator = op;
        self
    }
}

/// Wall-clock duration of one named phase of a retrieval call.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseTiming {
    pub phase: String,
    pub ms: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Retrieved {
    pub result: SearchResult,
    pub phases: Vec<PhaseTiming>,
}

#[derive(Debug, thiserror::Error)]
pub enum RetrievalError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("Boolean syntax (AND, OR, NOT) is not supported by this search tool; use a short natural-language query")]
    BooleanSyntax,
    #[error(transparent)]
    Request(#[from] SearchError),
    #[error(transparent)]
    Embedding(#[from] EmbedError),
    #[error("dense search failed: {0}")]
    Dense(#[from] DenseError),
    #[error("fusion failed: {0}")]
    Fusion(#[from] FusionError),
}

pub trait Retriever: Send + Sync {
    fn backend(&self) -> Backend;

    fn search(&self, query: &ToolQuery) -> Result<Retrieved, RetrievalError>;

    /// Full stored passage for a hit.
    fn document(&self, doc_id: &str) -> Option<&Document>;
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn timed<T>(phases: &mut Vec<PhaseTiming>, name: &str, f: impl FnOnce() -> T) -> T {
    let start = Instant::now();
    let out = f();
    phases.push(PhaseTiming { phase: name.to_owned(), ms: ms(start.elapsed()) });
    out
}

pub struct LogicalRetriever {
    snapshot: Arc<IndexSnapshot>,
    params: Bm25Params,
    allow_boolean_ops: bool,
}

impl LogicalRetriever {
    pub fn new(snapshot: Arc<IndexSnapshot>, params: Bm25Params) -> Self {
        LogicalRetriever { snapshot, params, allow_boolean_ops: true }
    }

    /// Restricts queries to terms, phrases, fields and boosts.
    pub fn without_boolean_ops(mut self) -> Self {
        self.allow_boolean_ops = false;
        self
    }

    pub fn snapshot(&self) -> &IndexSnapshot {
        &self.snapshot
    }
}

impl Retriever for LogicalRetriever {
    fn backend(&self) -> Backend {
        Backend::Logical
    }

    fn search(&self, q: &ToolQuery) -> Result<Retrieved, RetrievalError> {
        let mut opts = ParseOptions::default().with_default_operator(q.default_operator);
        if !self.allow_boolean_ops {
            opts = opts.without_boolean_ops();
        }
        let ast = parse_query(&q.query, opts)?;
        let request = SearchRequest::new(ast, q.max_results)?.with_params(self.params)?;
        let mut phases = Vec::new();
        let result = timed(&mut phases, "search", || search_topk(&request, &self.snapshot));
        Ok(Retrieved { result, phases })
    }

    fn document(&self, doc_id: &str) -> Option<&Document> {
        self.snapshot.ordinal(doc_id).map(|o| self.snapshot.document(o))
    }
}

pub struct HybridRetriever {
    snapshot: Arc<IndexSnapshot>,
    dense: Arc<DenseIndex>,
    embedder: Arc<dyn Embedder>,
    params: Bm25Params,
    fusion: FusionConfig,
}

impl HybridRetriever {
    pub fn new(
        snapshot: Arc<IndexSnapshot>,
        dense: Arc<DenseIndex>,
        embedder: Arc<dyn Embedder>,
        params: Bm25Params,
        fusion: FusionConfig,
    ) -> Result<Self, FusionError> {
        fusion.validate()?;
        Ok(HybridRetriever { snapshot, dense, embedder, params, fusion })
    }
}

fn snippet(content: &str) -> String {
    match content.char_indices().nth(SNIPPET_CHARS) {
        Some((cut, _)) => content[..cut].to_owned(),
        None => content.to_owned(),
    }
}

impl Retriever for HybridRetriever {
    fn backend(&self) -> Backend {
        Backend::Hybrid
    }

    fn search(&self, q: &ToolQuery) -> Result<Retrieved, RetrievalError> {
        if q.query.trim().is_empty() {
            return Err(ParseError { kind: ParseErrorKind::EmptyQuery, position: 0 }.into());
        }
        if contains_boolean_syntax(&q.query) {
            return Err(RetrievalError::BooleanSyntax);
        }
        if q.max_results == 0 {
            return Err(SearchError::ZeroMaxResults.into());
        }
        let depth = self.fusion.per_list_depth;
        let mut phases = Vec::new();

        let sparse: Vec<String> = timed(&mut phases, "sparse", || -> Result<_, RetrievalError> {
            let Some(ast) = bag_of_terms(&q.query) else { return Ok(Vec::new()) };
            let request = SearchRequest::new(ast, depth)?.with_params(self.params)?;
            Ok(search_topk(&request, &self.snapshot).hits.into_iter().map(|h| h.doc_id).collect())
        })?;
        let qvec = timed(&mut phases, "embed", || self.embedder.embed_query(&q.query))?;
        let dense: Vec<String> = timed(&mut phases, "dense", || self.dense.search(&qvec, depth))?
            .into_iter()
            .map(|(id, _)| id)
            .collect();
        let fused = timed(&mut phases, "fusion", || rrf_fuse(&[sparse, dense], self.fusion))?;
        let total_candidates = fused.len();
        let hits = timed(&mut phases, "fetch", || {
            fused
                .into_iter()
                .filter_map(|(id, score)| {
                    let doc = self.document(&id)?;
                    Some(Hit { doc_id: id, score, title: doc.title.clone(), snippet: snippet(&doc.content) })
                })
                .take(q.max_results)
                .collect()
        });
        Ok(Retrieved { result: SearchResult { hits, total_candidates }, phases })
    }

    fn document(&self, doc_id: &str) -> Option<&Document> {
        self.snapshot.ordinal(doc_id).map(|o| self.snapshot.document(o))
    }
}
