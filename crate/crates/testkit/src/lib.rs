//! Random corpora and queries, and brute-force reference implementations
//! used to check the engine. Nothing here touches the inverted index: the
//! oracles re-analyze raw document text and scan every document.

use lexrag_core::analysis::analyze;
use lexrag_core::index::{Document, Field, IndexSnapshot};
use lexrag_core::search::{evaluate_candidates, search_topk, SearchRequest};
use lexrag_core::query::{FieldScope, QueryAst};
use rand::seq::IndexedRandom;
use rand::Rng;
use std::collections::{HashMap, HashSet};

pub fn vocabulary(size: usize) -> Vec<String> {
    (0..size).map(|i| format!("w{i}")).collect()
}

/// Documents with random titles (0..=4 tokens) and contents (0..=max_len
/// tokens) over `vocab`; never both empty.
pub fn random_corpus<R: Rng>(rng: &mut R, n_docs: usize, vocab: &[String], max_len: usize) -> Vec<Document> {
    (0..n_docs)
        .map(|i| {
            let title_len = rng.random_range(0..=4);
            let mut content_len = rng.random_range(0..=max_len);
            if title_len == 0 && content_len == 0 {
                content_len = 1;
            }
            let mut pick = |n: usize| -> String {
                (0..n).map(|_| vocab.choose(rng).unwrap().as_str()).collect::<Vec<_>>().join(" ")
            };
            let title = pick(title_len);
            let content = pick(content_len);
            Document::new(format!("doc{:04}", (i * 7919) % 10007), title, content)
        })
        .collect()
}

/// Analyzed title and content of a document.
pub struct AnalyzedDoc {
    pub doc_id: String,
    pub fields: [Vec<String>; 2],
}

pub fn analyze_corpus(corpus: &[Document]) -> Vec<AnalyzedDoc> {
    corpus
        .iter()
        .map(|d| AnalyzedDoc { doc_id: d.doc_id.clone(), fields: [analyze(&d.title), analyze(&d.content)] })
        .collect()
}

fn slot(field: Field) -> usize {
    match field {
        Field::Title => 0,
        Field::Content => 1,
    }
}

/// Occurrences of `tokens` as a contiguous run in `field_tokens`.
pub fn count_phrase(field_tokens: &[String], tokens: &[String]) -> u32 {
    if tokens.is_empty() || tokens.len() > field_tokens.len() {
        return 0;
    }
    field_tokens.windows(tokens.len()).filter(|w| *w == tokens).count() as u32
}

fn leaf_tf(doc: &AnalyzedDoc, field: Field, tokens: &[String]) -> u32 {
    count_phrase(&doc.fields[slot(field)], tokens)
}

fn leaf_parts(ast: &QueryAst) -> (FieldScope, Vec<String>, f64) {
    match ast {
        QueryAst::Term { scope, token, boost } => (*scope, vec![token.clone()], *boost),
        QueryAst::Phrase { scope, tokens, boost } => (*scope, tokens.clone(), *boost),
        _ => panic!("not a leaf"),
    }
}

/// Boolean predicate evaluated directly on one document.
pub fn matches(ast: &QueryAst, doc: &AnalyzedDoc) -> bool {
    match ast {
        QueryAst::Term { .. } | QueryAst::Phrase { .. } => {
            let (scope, tokens, _) = leaf_parts(ast);
            scope.fields().iter().any(|&f| leaf_tf(doc, f, &tokens) > 0)
        }
        QueryAst::And(c) => c.iter().all(|n| matches(n, doc)),
        QueryAst::Or(c) => c.iter().any(|n| matches(n, doc)),
        QueryAst::Not(c) => !matches(c, doc),
    }
}

/// Full-scan BM25 over raw analyzed text.
pub struct Bm25Oracle<'a> {
    docs: &'a [AnalyzedDoc],
    k1: f64,
    b: f64,
    avgdl: [f64; 2],
    df: [HashMap<&'a str, u32>; 2],
}

impl<'a> Bm25Oracle<'a> {
    pub fn new(docs: &'a [AnalyzedDoc], k1: f64, b: f64) -> Self {
        let n = docs.len() as f64;
        let avg = |s: usize| docs.iter().map(|d| d.fields[s].len() as f64).sum::<f64>() / n;
        let mut df: [HashMap<&str, u32>; 2] = Default::default();
        for d in docs {
            for (s, counts) in df.iter_mut().enumerate() {
                let distinct: HashSet<&str> = d.fields[s].iter().map(String::as_str).collect();
                for t in distinct {
                    *counts.entry(t).or_default() += 1;
                }
            }
        }
        Bm25Oracle { docs, k1, b, avgdl: [avg(0), avg(1)], df }
    }

    fn df(&self, field: Field, token: &str) -> u32 {
        self.df[slot(field)].get(token).copied().unwrap_or(0)
    }

    fn idf(&self, field: Field, token: &str) -> f64 {
        let n = self.docs.len() as f64;
        let df = f64::from(self.df(field, token));
        // same log as the engine: a one-ulp difference would reorder exact ties
        libm::log(1.0 + (n - df + 0.5) / (df + 0.5))
    }

    pub fn score(&self, ast: &QueryAst, doc: &AnalyzedDoc) -> f64 {
        let mut total = 0.0;
        for leaf in ast.positive_leaves() {
            let (scope, tokens, boost) = leaf_parts(leaf);
            for &field in scope.fields() {
                let tf = leaf_tf(doc, field, &tokens);
                if tf == 0 {
                    continue;
                }
                let idf: f64 = tokens.iter().map(|t| self.idf(field, t)).sum();
                let tf = f64::from(tf);
                let dl = doc.fields[slot(field)].len() as f64;
                let norm = self.k1 * (1.0 - self.b + self.b * dl / self.avgdl[slot(field)]);
                total += boost * idf * tf * (self.k1 + 1.0) / (tf + norm);
            }
        }
        total
    }

    /// Every matching document scored, sorted by score desc then doc_id asc,
    /// truncated to `k`.
    pub fn top_k(&self, ast: &QueryAst, k: usize) -> (Vec<(String, f64)>, usize) {
        let mut scored: Vec<(String, f64)> = self
            .docs
            .iter()
            .filter(|d| matches(ast, d))
            .map(|d| (d.doc_id.clone(), self.score(ast, d)))
            .collect();
        let total = scored.len();
        scored.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then_with(|| a.0.cmp(&b.0)));
        scored.truncate(k);
        (scored, total)
    }
}

/// Random valid queries over a corpus. Phrases are often lifted from real
/// documents so they match something.
pub struct QueryGen<'a> {
    pub vocab: &'a [String],
    pub docs: &'a [AnalyzedDoc],
    pub max_depth: usize,
}

impl QueryGen<'_> {
    fn scope<R: Rng>(&self, rng: &mut R) -> FieldScope {
        match rng.random_range(0..4) {
            0 => FieldScope::Only(Field::Title),
            1 => FieldScope::Only(Field::Content),
            _ => FieldScope::Any,
        }
    }

    fn boost<R: Rng>(&self, rng: &mut R) -> f64 {
        *[1.0, 1.0, 1.0, 0.5, 2.0, 3.0].choose(rng).unwrap()
    }

    pub fn leaf<R: Rng>(&self, rng: &mut R) -> QueryAst {
        let scope = self.scope(rng);
        let boost = self.boost(rng);
        if rng.random_bool(0.3) {
            let len = rng.random_range(1..=3);
            let from_doc = self.docs.choose(rng).and_then(|d| {
                let f = &d.fields[rng.random_range(0..2)];
                (f.len() >= len).then(|| {
                    let start = rng.random_range(0..=f.len() - len);
                    f[start..start + len].to_vec()
                })
            });
            let tokens = match from_doc {
                Some(t) if rng.random_bool(0.8) => t,
                _ => (0..len).map(|_| self.vocab.choose(rng).unwrap().clone()).collect(),
            };
            QueryAst::Phrase { scope, tokens, boost }
        } else {
            QueryAst::Term { scope, token: self.vocab.choose(rng).unwrap().clone(), boost }
        }
    }

    /// A non-negative query of depth at most `depth`.
    pub fn query<R: Rng>(&self, rng: &mut R, depth: usize) -> QueryAst {
        if depth <= 1 || rng.random_bool(0.25) {
            return self.leaf(rng);
        }
        let n = rng.random_range(2..=3);
        if rng.random_bool(0.5) {
            let mut children: Vec<QueryAst> = (0..n).map(|_| self.query(rng, depth - 1)).collect();
            if depth >= 3 && rng.random_bool(0.5) {
                children.push(QueryAst::not(self.query(rng, depth - 2)));
            } else if rng.random_bool(0.4) {
                children.push(QueryAst::not(self.leaf(rng)));
            }
            QueryAst::and(children)
        } else {
            QueryAst::or((0..n).map(|_| self.query(rng, depth - 1)))
        }
    }
}

/// Tokens that analyze to themselves, so terms built from them survive
/// a render/parse round trip.
pub fn roundtrip_tokens() -> Vec<String> {
    ["cat", "dog", "vivaldi", "opera", "1678", "café", "über", "x2", "naïve", "o'neil", "3.14"]
        .iter()
        .map(|s| s.to_string())
        .filter(|t| analyze(t) == [t.clone()])
        .collect()
}

/// Random canonical ASTs with at most `max_leaves` leaves and depth at most `max_depth`.
pub fn random_ast<R: Rng>(rng: &mut R, tokens: &[String], max_depth: usize, max_leaves: usize) -> QueryAst {
    fn go<R: Rng>(rng: &mut R, tokens: &[String], depth: usize, budget: &mut usize) -> QueryAst {
        let leaf = |rng: &mut R, budget: &mut usize| {
            *budget = budget.saturating_sub(1);
            let scope = match rng.random_range(0..3) {
                0 => FieldScope::Only(Field::Title),
                1 => FieldScope::Only(Field::Content),
                _ => FieldScope::Any,
            };
            let boost = *[1.0, 1.0, 2.0, 0.5, 1.25, 10.0].choose(rng).unwrap();
            if rng.random_bool(0.3) {
                let n = rng.random_range(1..=3);
                QueryAst::Phrase { scope, tokens: (0..n).map(|_| tokens.choose(rng).unwrap().clone()).collect(), boost }
            } else {
                QueryAst::Term { scope, token: tokens.choose(rng).unwrap().clone(), boost }
            }
        };
        if depth <= 1 || *budget < 2 || rng.random_bool(0.3) {
            return leaf(rng, budget);
        }
        let n = rng.random_range(2..=3).min(*budget);
        let mut children = Vec::new();
        let conj = rng.random_bool(0.5);
        for _ in 0..n {
            if *budget == 0 {
                break;
            }
            children.push(go(rng, tokens, depth - 1, budget));
        }
        if conj && depth >= 3 && *budget >= 1 && rng.random_bool(0.4) {
            children.push(QueryAst::not(go(rng, tokens, depth - 2, budget)));
        }
        if children.len() < 2 {
            return children.pop().unwrap_or_else(|| leaf(rng, budget));
        }
        if conj {
            QueryAst::and(children)
        } else {
            QueryAst::or(children)
        }
    }
    let mut budget = max_leaves;
    go(rng, tokens, max_depth, &mut budget)
}

/// Exhaustive dense ranking: all dot products of normalized vectors, sorted.
pub fn dense_oracle(ids: &[String], vectors: &[Vec<f32>], query: &[f32], k: usize) -> Vec<(String, f64)> {
    let norm = |v: &[f32]| -> Vec<f32> {
        let n = v.iter().map(|&x| f64::from(x) * f64::from(x)).sum::<f64>().sqrt();
        v.iter().map(|&x| (f64::from(x) / n) as f32).collect()
    };
    let q = norm(query);
    let mut all: Vec<(String, f64)> = ids
        .iter()
        .zip(vectors)
        .map(|(id, v)| {
            let v = norm(v);
            (id.clone(), q.iter().zip(&v).map(|(&a, &b)| f64::from(a) * f64::from(b)).sum())
        })
        .collect();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

pub fn random_vectors<R: Rng>(rng: &mut R, n: usize, dim: usize) -> Vec<Vec<f32>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0f32..1.0)).collect()).collect()
}

/// A grouping client gone wrong: drops, duplicates, and invents turn
/// assignments at random.
pub fn fuzzed_grouping<R: Rng>(rng: &mut R, n_turns: usize) -> Vec<Vec<usize>> {
    let n_groups = rng.random_range(0..=n_turns.max(1));
    (0..n_groups)
        .map(|_| {
            let size = rng.random_range(0..=n_turns + 1);
            (0..size).map(|_| rng.random_range(0..n_turns + 2)).collect()
        })
        .collect()
}

/// Relative closeness used for score comparison.
pub fn close(a: f64, b: f64, rel: f64) -> bool {
    a == b || (a - b).abs() <= rel * a.abs().max(b.abs())
}

/// Documents on which the index's candidate set and the brute-force
/// predicate disagree.
pub fn boolean_mismatches(ast: &QueryAst, snapshot: &IndexSnapshot, docs: &[AnalyzedDoc]) -> Vec<String> {
    let got: HashSet<u32> = evaluate_candidates(ast, snapshot).into_iter().collect();
    docs.iter()
        .enumerate()
        .filter(|(i, d)| got.contains(&(*i as u32)) != matches(ast, d))
        .map(|(_, d)| d.doc_id.clone())
        .collect()
}

/// Compares `search_topk` with the full-scan scorer; describes the first
/// disagreement.
pub fn ranking_mismatch(ast: &QueryAst, k: usize, snapshot: &IndexSnapshot, oracle: &Bm25Oracle<'_>, rel: f64) -> Option<String> {
    let request = SearchRequest::new(ast.clone(), k).ok()?;
    let got = search_topk(&request, snapshot);
    let (want, total) = oracle.top_k(ast, k);
    if got.total_candidates != total {
        return Some(format!("candidates {} vs oracle {}", got.total_candidates, total));
    }
    if got.hits.len() != want.len() {
        return Some(format!("{} hits vs oracle {}", got.hits.len(), want.len()));
    }
    for (rank, (hit, (id, score))) in got.hits.iter().zip(&want).enumerate() {
        if &hit.doc_id != id {
            return Some(format!("rank {rank}: {} ({}) vs oracle {} ({})", hit.doc_id, hit.score, id, score));
        }
        if !close(hit.score, *score, rel) {
            return Some(format!("rank {rank}: {} score {} vs oracle {}", id, hit.score, score));
        }
    }
    None
}
