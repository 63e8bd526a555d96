//! Query execution: the Boolean structure of a query fixes the candidate
//! set, and Okapi BM25 orders the candidates.
//!
//! Per field and per positive leaf clause the score contribution is
//!
//! ```text
//! boost * idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))
//! idf(df) = ln(1 + (N - df + 0.5) / (df + 0.5))
//! ```
//!
//! A phrase uses its occurrence count as `tf` and the sum of its tokens'
//! idfs. An unfielded clause sums the title and content contributions.
//! Clauses under `NOT` filter only and never score.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::index::{Field, IndexSnapshot, PostingList};
use crate::query::{FieldScope, QueryAst};

/// Number of leading content characters returned as a hit snippet.
pub const SNIPPET_CHARS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn new(k1: f64, b: f64) -> Result<Self, SearchError> {
        let p = Bm25Params { k1, b };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), SearchError> {
        if !(self.k1.is_finite() && self.k1 >= 0.0) {
            return Err(SearchError::InvalidK1(self.k1));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(SearchError::InvalidB(self.b));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SearchError {
    #[error("bm25 k1 must be finite and >= 0, got {0}")]
    InvalidK1(f64),
    #[error("bm25 b must lie in [0, 1], got {0}")]
    InvalidB(f64),
    #[error("max_results must be at least 1")]
    ZeroMaxResults,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchRequest {
    query: QueryAst,
    max_results: usize,
    params: Bm25Params,
}

impl SearchRequest {
    pub fn new(query: QueryAst, max_results: usize) -> Result<Self, SearchError> {
        if max_results == 0 {
            return Err(SearchError::ZeroMaxResults);
        }
        Ok(SearchRequest { query, max_results, params: Bm25Params::default() })
    }

    pub fn with_params(mut self, params: Bm25Params) -> Result<Self, SearchError> {
        params.validate()?;
        self.params = params;
        Ok(self)
    }

    pub fn query(&self) -> &QueryAst {
        &self.query
    }

    pub fn max_results(&self) -> usize {
        self.max_results
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Hit {
    pub doc_id: String,
    pub score: f64,
    pub title: String,
    pub snippet: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
    pub total_candidates: usize,
}

/// Sorted, duplicate-free document ordinals.
pub type DocSet = Vec<u32>;

fn intersect(a: &[u32], b: &[u32]) -> DocSet {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len().min(b.len()));
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => i += 1,
            Ordering::Greater => j += 1,
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

fn union(a: &[u32], b: &[u32]) -> DocSet {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::with_capacity(a.len() + b.len());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            Ordering::Less => {
                out.push(a[i]);
                i += 1;
            }
            Ordering::Greater => {
                out.push(b[j]);
                j += 1;
            }
            Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out.extend_from_slice(&a[i..]);
    out.extend_from_slice(&b[j..]);
    out
}

fn difference(a: &[u32], b: &[u32]) -> DocSet {
    let mut j = 0;
    let mut out = Vec::with_capacity(a.len());
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j >= b.len() || b[j] != x {
            out.push(x);
        }
    }
    out
}

fn universe(snapshot: &IndexSnapshot) -> DocSet {
    (0..snapshot.doc_count()).collect()
}

/// Counts the start positions at which `tokens` occur consecutively in one field.
pub fn phrase_positions(tokens: &[String], field: Field, doc: u32, snapshot: &IndexSnapshot) -> u32 {
    let lists: Option<Vec<&PostingList>> = tokens.iter().map(|t| snapshot.postings(field, t)).collect();
    match lists {
        Some(lists) if !lists.is_empty() => phrase_count_in(&lists, doc),
        _ => 0,
    }
}

fn phrase_count_in(lists: &[&PostingList], doc: u32) -> u32 {
    let postings: Option<Vec<&[u32]>> = lists.iter().map(|l| l.get(doc).map(|p| p.positions.as_slice())).collect();
    let Some(postings) = postings else { return 0 };
    let (first, rest) = postings.split_first().expect("phrase has at least one token");
    first
        .iter()
        .filter(|&&start| {
            rest.iter().enumerate().all(|(i, positions)| {
                start.checked_add(i as u32 + 1).is_some_and(|p| positions.binary_search(&p).is_ok())
            })
        })
        .count() as u32
}

fn leaf_docs(scope: FieldScope, tokens: &[String], snapshot: &IndexSnapshot) -> DocSet {
    let mut acc = DocSet::new();
    for &field in scope.fields() {
        let lists: Option<Vec<&PostingList>> = tokens.iter().map(|t| snapshot.postings(field, t)).collect();
        let Some(lists) = lists else { continue };
        let docs: DocSet = if lists.len() == 1 {
            lists[0].docs().collect()
        } else {
            let mut shortest: Vec<&&PostingList> = lists.iter().collect();
            shortest.sort_by_key(|l| l.document_frequency());
            let mut common: DocSet = shortest[0].docs().collect();
            for l in &shortest[1..] {
                let other: DocSet = l.docs().collect();
                common = intersect(&common, &other);
            }
            common.retain(|&d| phrase_count_in(&lists, d) > 0);
            common
        };
        acc = union(&acc, &docs);
    }
    acc
}

/// The set of documents satisfying the Boolean structure of `ast`.
///
/// Unknown terms produce empty sets. `NOT x` is the complement of `x`, so
/// inside an `AND` it removes documents from the positive clauses.
pub fn evaluate_candidates(ast: &QueryAst, snapshot: &IndexSnapshot) -> DocSet {
    match ast {
        QueryAst::Term { scope, token, .. } => leaf_docs(*scope, core::slice::from_ref(token), snapshot),
        QueryAst::Phrase { scope, tokens, .. } => leaf_docs(*scope, tokens, snapshot),
        QueryAst::Or(children) => children.iter().fold(DocSet::new(), |acc, c| union(&acc, &evaluate_candidates(c, snapshot))),
        QueryAst::And(children) => {
            let mut positive: Option<DocSet> = None;
            let mut excluded = DocSet::new();
            for child in children {
                match child {
                    QueryAst::Not(inner) => excluded = union(&excluded, &evaluate_candidates(inner, snapshot)),
                    other => {
                        let set = evaluate_candidates(other, snapshot);
                        positive = Some(match positive {
                            None => set,
                            Some(p) => intersect(&p, &set),
                        });
                    }
                }
            }
            let base = positive.unwrap_or_else(|| universe(snapshot));
            difference(&base, &excluded)
        }
        QueryAst::Not(inner) => difference(&universe(snapshot), &evaluate_candidates(inner, snapshot)),
    }
}

fn idf(doc_count: u32, df: u32) -> f64 {
    let n = f64::from(doc_count);
    let df = f64::from(df);
    libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
}

struct FieldClause<'a> {
    field: Field,
    lists: Vec<&'a PostingList>,
    idf: f64,
    avgdl: f64,
}

struct ScoringLeaf<'a> {
    boost: f64,
    phrase: bool,
    fields: Vec<FieldClause<'a>>,
}

/// Positive leaves of a query with their posting lists and idfs resolved.
struct Scorer<'a> {
    snapshot: &'a IndexSnapshot,
    params: Bm25Params,
    leaves: Vec<ScoringLeaf<'a>>,
}

impl<'a> Scorer<'a> {
    fn new(ast: &QueryAst, snapshot: &'a IndexSnapshot, params: Bm25Params) -> Self {
        let n = snapshot.doc_count();
        let leaves = ast
            .positive_leaves()
            .into_iter()
            .map(|leaf| {
                let (scope, tokens, boost, phrase): (FieldScope, &[String], f64, bool) = match leaf {
                    QueryAst::Term { scope, token, boost } => (*scope, core::slice::from_ref(token), *boost, false),
                    QueryAst::Phrase { scope, tokens, boost } => (*scope, tokens.as_slice(), *boost, true),
                    _ => unreachable!("positive_leaves yields leaves only"),
                };
                let fields = scope
                    .fields()
                    .iter()
                    .filter_map(|&field| {
                        let lists: Option<Vec<&PostingList>> = tokens.iter().map(|t| snapshot.postings(field, t)).collect();
                        let lists = lists?;
                        let idf = lists.iter().map(|l| idf(n, l.document_frequency())).sum();
                        Some(FieldClause { field, lists, idf, avgdl: snapshot.stats(field).avg_field_length() })
                    })
                    .collect();
                ScoringLeaf { boost, phrase, fields }
            })
            .collect();
        Scorer { snapshot, params, leaves }
    }

    fn score(&self, doc: u32) -> f64 {
        let Bm25Params { k1, b } = self.params;
        let mut total = 0.0;
        for leaf in &self.leaves {
            for fc in &leaf.fields {
                let tf = if leaf.phrase {
                    phrase_count_in(&fc.lists, doc)
                } else {
                    fc.lists[0].get(doc).map_or(0, |p| p.term_frequency())
                };
                if tf == 0 {
                    continue;
                }
                let tf = f64::from(tf);
                let dl = f64::from(self.snapshot.stats(fc.field).field_length(doc));
                let norm = k1 * (1.0 - b + b * dl / fc.avgdl);
                total += leaf.boost * fc.idf * tf * (k1 + 1.0) / (tf + norm);
            }
        }
        total
    }
}

/// BM25 score of one document for the positive clauses of `ast`.
pub fn score_bm25(ast: &QueryAst, doc: u32, snapshot: &IndexSnapshot, params: Bm25Params) -> f64 {
    Scorer::new(ast, snapshot, params).score(doc)
}

fn snippet(content: &str) -> String {
    match content.char_indices().nth(SNIPPET_CHARS) {
        Some((cut, _)) => String::from(&content[..cut]),
        None => String::from(content),
    }
}

/// Orders `(score, doc)` pairs by descending score, then ascending doc_id.
pub fn rank_order(snapshot: &IndexSnapshot) -> impl Fn(&(f64, u32), &(f64, u32)) -> Ordering + '_ {
    move |a, b| {
        b.0.partial_cmp(&a.0)
            .unwrap_or(Ordering::Equal)
            .then_with(|| snapshot.document(a.1).doc_id.cmp(&snapshot.document(b.1).doc_id))
    }
}

/// Executes a request: Boolean candidates, scored by BM25, best first.
pub fn search_topk(request: &SearchRequest, snapshot: &IndexSnapshot) -> SearchResult {
    let candidates = evaluate_candidates(&request.query, snapshot);
    let total_candidates = candidates.len();
    let scorer = Scorer::new(&request.query, snapshot, request.params);
    let mut scored: Vec<(f64, u32)> = candidates.into_iter().map(|d| (scorer.score(d), d)).collect();
    let order = rank_order(snapshot);
    let k = request.max_results.min(scored.len());
    if k < scored.len() {
        scored.select_nth_unstable_by(k, &order);
        scored.truncate(k);
    }
    scored.sort_by(&order);
    let hits = scored
        .into_iter()
        .map(|(score, d)| {
            let doc = snapshot.document(d);
            Hit { doc_id: doc.doc_id.clone(), score, title: doc.title.clone(), snippet: snippet(&doc.content) }
        })
        .collect();
    SearchResult { hits, total_candidates }
}
