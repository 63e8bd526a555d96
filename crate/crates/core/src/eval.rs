//! Evaluation kernels: answer matching, the answer-unavailable protocol's
//! classification and rates, and trajectory-level intent metrics.
//!
//! Everything that needs a model (judging answers, grouping queries by
//! intent, judging per-turn relevance) happens outside; these functions
//! consume its outputs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::analysis::analyze;
use crate::index::Document;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("no records to aggregate")]
    NoRecords,
    #[error("no repeated intents")]
    NoRepeatedIntents,
    #[error("no recoverable intents")]
    NoRecoverableIntents,
    #[error("intent {intent} turn {turn_index} has no success label")]
    MissingSuccessLabel { intent: usize, turn_index: u32 },
    #[error("requested {requested} answer-unavailable examples but only {available} are annotated")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("answered trajectory needs a judge verdict")]
    MissingVerdict,
    #[error("trajectory was aborted and cannot be classified")]
    Aborted,
}

/// One question with its gold answers and supporting passages.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaExample {
    #[serde(rename = "id")]
    pub question_id: String,
    pub question: String,
    #[serde(rename = "answers")]
    pub gold_answers: Vec<String>,
    #[serde(default)]
    pub gold_passage_ids: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Correct,
    Incorrect,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UnavailableClass {
    Refusal,
    Hallucination,
    GoldLeak,
}

/// How an agent run ended, without its payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutcomeKind {
    Answer,
    Refusal,
    TurnLimit,
    Aborted,
}

/// Per-question evaluation outcome.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub question_id: String,
    pub em: u8,
    pub f1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub judge: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unavailable_class: Option<UnavailableClass>,
}

/// Lowercases, strips ASCII punctuation and the articles a/an/the, and
/// splits on whitespace.
pub fn normalize_answer(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let stripped: String = lowered.chars().filter(|c| !c.is_ascii_punctuation()).collect();
    stripped
        .split_whitespace()
        .filter(|w| !matches!(*w, "a" | "an" | "the"))
        .map(String::from)
        .collect()
}

/// 1 if the normalized prediction equals any normalized gold answer.
pub fn exact_match<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> u8 {
    let pred = normalize_answer(prediction);
    u8::from(gold_answers.iter().any(|g| normalize_answer(g.as_ref()) == pred))
}

fn token_f1(pred: &[String], gold: &[String]) -> f64 {
    if pred.is_empty() || gold.is_empty() {
        return if pred.is_empty() && gold.is_empty() { 1.0 } else { 0.0 };
    }
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for t in gold {
        *counts.entry(t).or_default() += 1;
    }
    let mut common = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                common += 1;
            }
        }
    }
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / pred.len() as f64;
    let recall = common as f64 / gold.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// Best token-multiset F1 over the gold answers.
pub fn word_f1<S: AsRef<str>>(prediction: &str, gold_answers: &[S]) -> f64 {
    let pred = normalize_answer(prediction);
    gold_answers
        .iter()
        .map(|g| token_f1(&pred, &normalize_answer(g.as_ref())))
        .fold(0.0, f64::max)
}

pub fn classify_unavailable(outcome: OutcomeKind, verdict: Option<Verdict>) -> Result<UnavailableClass, EvalError> {
    match outcome {
        OutcomeKind::Refusal | OutcomeKind::TurnLimit => Ok(UnavailableClass::Refusal),
        OutcomeKind::Answer => match verdict {
            Some(Verdict::Correct) => Ok(UnavailableClass::GoldLeak),
            Some(Verdict::Incorrect) => Ok(UnavailableClass::Hallucination),
            None => Err(EvalError::MissingVerdict),
        },
        OutcomeKind::Aborted => Err(EvalError::Aborted),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnavailableRates {
    pub refusal: f64,
    pub hallucination: f64,
    pub gold_leak: f64,
    pub total: usize,
}

pub fn unavailable_rates(classes: &[UnavailableClass]) -> Result<UnavailableRates, EvalError> {
    if classes.is_empty() {
        return Err(EvalError::NoRecords);
    }
    let n = classes.len() as f64;
    let rate = |k: UnavailableClass| classes.iter().filter(|&&c| c == k).count() as f64 / n;
    Ok(UnavailableRates {
        refusal: rate(UnavailableClass::Refusal),
        hallucination: rate(UnavailableClass::Hallucination),
        gold_leak: rate(UnavailableClass::GoldLeak),
        total: classes.len(),
    })
}

/// Answer-unavailable split: selected examples and the corpus without
/// their gold passages.
#[derive(Clone, Debug, PartialEq)]
pub struct UnavailableSet {
    pub corpus: Vec<Document>,
    pub examples: Vec<QaExample>,
    pub removed_passages: usize,
    /// Examples skipped because they list no gold passages.
    pub skipped_unannotated: usize,
    /// Examples skipped because a listed gold passage is not in the corpus.
    pub skipped_missing_gold: usize,
}

/// Takes the first `size` annotated examples (input order) and removes all
/// of their gold passages from the corpus.
pub fn build_unavailable_set(examples: &[QaExample], corpus: &[Document], size: usize) -> Result<UnavailableSet, EvalError> {
    let present: BTreeSet<&str> = corpus.iter().map(|d| d.doc_id.as_str()).collect();
    let mut skipped_unannotated = 0;
    let mut skipped_missing_gold = 0;
    let mut pool = Vec::new();
    for ex in examples {
        if ex.gold_passage_ids.is_empty() {
            skipped_unannotated += 1;
        } else if ex.gold_passage_ids.iter().any(|id| !present.contains(id.as_str())) {
            skipped_missing_gold += 1;
        } else {
            pool.push(ex);
        }
    }
    if size > pool.len() {
        return Err(EvalError::SubsetTooLarge { requested: size, available: pool.len() });
    }
    let selected: Vec<QaExample> = pool.into_iter().take(size).cloned().collect();
    let removed: BTreeSet<&str> = selected.iter().flat_map(|e| e.gold_passage_ids.iter().map(String::as_str)).collect();
    let pruned: Vec<Document> = corpus.iter().filter(|d| !removed.contains(d.doc_id.as_str())).cloned().collect();
    Ok(UnavailableSet {
        removed_passages: corpus.len() - pruned.len(),
        corpus: pruned,
        examples: selected,
        skipped_unannotated,
        skipped_missing_gold,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupTurn {
    pub turn_index: u32,
    pub query: String,
    /// Top-K retrieved passage ids.
    pub retrieved: Vec<String>,
    #[serde(default)]
    pub success: Option<bool>,
}

/// Retrieval turns of one trajectory that chase the same missing fact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntentGroup {
    pub intent_id: usize,
    /// Ordered by `turn_index`.
    pub turns: Vec<GroupTurn>,
}

/// Turns a proposed grouping of `n` turns (0-based positions) into a
/// partition. Out-of-range and repeated assignments are dropped (first
/// assignment wins), unassigned turns become singletons, and groups are
/// ordered by their first turn.
pub fn repair_partition(n: usize, proposed: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut assigned = alloc::vec![false; n];
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for group in proposed {
        let mut members: Vec<usize> = Vec::new();
        for &t in group {
            if t < n && !assigned[t] {
                assigned[t] = true;
                members.push(t);
            }
        }
        if !members.is_empty() {
            members.sort_unstable();
            groups.push(members);
        }
    }
    for (t, done) in assigned.iter().enumerate() {
        if !done {
            groups.push(alloc::vec![t]);
        }
    }
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Groups queries whose analyzed token sequences are identical.
pub fn exact_match_grouping<S: AsRef<str>>(queries: &[S]) -> Vec<Vec<usize>> {
    let mut by_key: BTreeMap<Vec<String>, Vec<usize>> = BTreeMap::new();
    for (i, q) in queries.iter().enumerate() {
        by_key.entry(analyze(q.as_ref())).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = by_key.into_values().collect();
    groups.sort_by_key(|g| g[0]);
    groups
}

/// Builds intent groups from a partition over `turns`.
pub fn assemble_groups(turns: &[GroupTurn], partition: &[Vec<usize>]) -> Vec<IntentGroup> {
    partition
        .iter()
        .enumerate()
        .map(|(intent_id, members)| {
            let mut group_turns: Vec<GroupTurn> = members.iter().map(|&i| turns[i].clone()).collect();
            group_turns.sort_by_key(|t| t.turn_index);
            IntentGroup { intent_id, turns: group_turns }
        })
        .collect()
}

fn pair_overlap(a: &[String], b: &[String]) -> f64 {
    let a: BTreeSet<&str> = a.iter().map(String::as_str).collect();
    let b: BTreeSet<&str> = b.iter().map(String::as_str).collect();
    let denom = a.len().max(b.len());
    if denom == 0 {
        // two empty retrievals: the revision changed nothing
        return 1.0;
    }
    a.intersection(&b).count() as f64 / denom as f64
}

/// Mean adjacent-pair overlap within each repeated group, macro-averaged
/// over groups with at least two turns.
pub fn same_intent_overlap(groups: &[IntentGroup]) -> Result<f64, EvalError> {
    let per_group: Vec<f64> = groups
        .iter()
        .filter(|g| g.turns.len() >= 2)
        .map(|g| {
            let pairs: Vec<f64> = g.turns.windows(2).map(|w| pair_overlap(&w[0].retrieved, &w[1].retrieved)).collect();
            pairs.iter().sum::<f64>() / pairs.len() as f64
        })
        .collect();
    if per_group.is_empty() {
        return Err(EvalError::NoRepeatedIntents);
    }
    Ok(per_group.iter().sum::<f64>() / per_group.len() as f64)
}

/// Fraction of recoverable groups (two or more turns, first turn failed)
/// in which some later turn succeeded.
pub fn intent_recovery(groups: &[IntentGroup]) -> Result<f64, EvalError> {
    let mut recoverable = 0usize;
    let mut recovered = 0usize;
    for g in groups {
        if g.turns.len() < 2 {
            continue;
        }
        let mut flags = Vec::with_capacity(g.turns.len());
        for t in &g.turns {
            flags.push(t.success.ok_or(EvalError::MissingSuccessLabel { intent: g.intent_id, turn_index: t.turn_index })?);
        }
        if flags[0] {
            continue;
        }
        recoverable += 1;
        if flags[1..].iter().any(|&s| s) {
            recovered += 1;
        }
    }
    if recoverable == 0 {
        return Err(EvalError::NoRecoverableIntents);
    }
    Ok(recovered as f64 / recoverable as f64)
}
