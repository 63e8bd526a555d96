//! Scoring agent runs: EM/F1 and an LLM judge, the answer-unavailable
//! protocol, and trajectory metrics over intent groups.

use crate::agent::Trajectory;
use crate::llm::{ChatMessage, ChatModel, Decoding, LlmError};
use lexrag_core::eval::{
    assemble_groups, classify_unavailable, exact_match, exact_match_grouping, intent_recovery, repair_partition,
    same_intent_overlap, unavailable_rates, word_f1, EvalError, EvalRecord, GroupTurn, IntentGroup, OutcomeKind,
    QaExample, UnavailableClass, UnavailableRates, Verdict,
};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct JudgeSettings {
    pub temperature: f64,
    pub top_p: f64,
    /// Extra attempts after a transport failure.
    pub transport_retries: u32,
}

impl Default for JudgeSettings {
    fn default() -> Self {
        JudgeSettings { temperature: 0.3, top_p: 0.95, transport_retries: 2 }
    }
}

impl JudgeSettings {
    fn decoding(&self) -> Decoding {
        Decoding { temperature: self.temperature, top_p: self.top_p }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Judgement {
    pub verdict: Verdict,
    /// Set when the verdict is a fallback for unparseable judge output.
    pub warning: Option<String>,
}

pub fn judge_messages(question: &str, prediction: &str, gold_answers: &[String]) -> Vec<ChatMessage> {
    let golds = gold_answers.iter().map(|g| format!("- {g}")).collect::<Vec<_>>().join("\n");
    vec![
        ChatMessage::system(
            "You grade answers to questions. A prediction is correct if it refers to the same entity, value or fact \
             as any gold answer, even when worded differently. Reply with exactly one word: correct or incorrect.",
        ),
        ChatMessage::user(format!("Question: {question}\nGold answers:\n{golds}\nPrediction: {prediction}\nVerdict:")),
    ]
}

/// Reads a one-word verdict, tolerating case, surrounding punctuation and
/// trailing explanation.
pub fn parse_verdict(text: &str) -> Option<Verdict> {
    let first = text.split_whitespace().next()?;
    let word: String = first.chars().filter(|c| c.is_alphabetic()).collect::<String>().to_lowercase();
    match word.as_str() {
        "correct" => Some(Verdict::Correct),
        "incorrect" => Some(Verdict::Incorrect),
        _ => None,
    }
}

fn chat_retrying(model: &dyn ChatModel, messages: &[ChatMessage], settings: &JudgeSettings) -> Result<String, LlmError> {
    let mut attempt = 0;
    loop {
        match model.chat(messages, &[], settings.decoding()) {
            Ok(reply) => return Ok(reply.content),
            Err(e) if e.is_transient() && attempt < settings.transport_retries => attempt += 1,
            Err(e) => return Err(e),
        }
    }
}

/// Binary verdict from a judge model. Unparseable output is retried once,
/// then counted as incorrect with a warning.
pub fn judge_answer(
    question: &str,
    prediction: &str,
    gold_answers: &[String],
    judge: &dyn ChatModel,
    settings: &JudgeSettings,
) -> Result<Judgement, LlmError> {
    let messages = judge_messages(question, prediction, gold_answers);
    let mut last = String::new();
    for _ in 0..2 {
        last = chat_retrying(judge, &messages, settings)?;
        if let Some(verdict) = parse_verdict(&last) {
            return Ok(Judgement { verdict, warning: None });
        }
    }
    let warning = format!("unparseable judge output {last:?}; counted as incorrect");
    tracing::warn!("{warning}");
    Ok(Judgement { verdict: Verdict::Incorrect, warning: Some(warning) })
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScoreSummary {
    pub count: usize,
    pub em: f64,
    pub f1: f64,
    /// Fraction judged correct among records with a verdict.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub judge: Option<f64>,
    pub judge_errors: usize,
    pub judge_warnings: usize,
    pub aborted: usize,
    pub unmatched_trajectories: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub summary: ScoreSummary,
    pub records: Vec<EvalRecord>,
}

fn by_id(examples: &[QaExample]) -> HashMap<&str, &QaExample> {
    examples.iter().map(|e| (e.question_id.as_str(), e)).collect()
}

/// EM, F1 and (with a judge) judge accuracy. Runs without an answer score
/// zero and are judged incorrect without a judge call; aborted runs are
/// counted and left out.
pub fn score_trajectories(
    trajectories: &[Trajectory],
    examples: &[QaExample],
    judge: Option<(&dyn ChatModel, &JudgeSettings)>,
) -> ScoreReport {
    let examples = by_id(examples);
    let mut summary = ScoreSummary::default();
    let mut records = Vec::new();
    let mut judged = 0usize;
    let mut correct = 0usize;
    for t in trajectories {
        let Some(ex) = examples.get(t.question_id.as_str()) else {
            summary.unmatched_trajectories += 1;
            continue;
        };
        if t.outcome == OutcomeKind::Aborted {
            summary.aborted += 1;
            continue;
        }
        let prediction = t.answer.as_deref().unwrap_or_default();
        let em = if t.answer.is_some() { exact_match(prediction, &ex.gold_answers) } else { 0 };
        let f1 = if t.answer.is_some() { word_f1(prediction, &ex.gold_answers) } else { 0.0 };
        let verdict = match judge {
            None => None,
            Some(_) if t.answer.is_none() => Some(Verdict::Incorrect),
            Some((model, settings)) => match judge_answer(&ex.question, prediction, &ex.gold_answers, model, settings) {
                Ok(j) => {
                    summary.judge_warnings += usize::from(j.warning.is_some());
                    Some(j.verdict)
                }
                Err(e) => {
                    tracing::warn!(question = %t.question_id, error = %e, "judge failed");
                    summary.judge_errors += 1;
                    None
                }
            },
        };
        if let Some(v) = verdict {
            judged += 1;
            correct += usize::from(v == Verdict::Correct);
        }
        records.push(EvalRecord { question_id: t.question_id.clone(), em, f1, judge: verdict, unavailable_class: None });
    }
    summary.count = records.len();
    if !records.is_empty() {
        let n = records.len() as f64;
        summary.em = records.iter().map(|r| f64::from(r.em)).sum::<f64>() / n;
        summary.f1 = records.iter().map(|r| r.f1).sum::<f64>() / n;
    }
    if judge.is_some() && judged > 0 {
        summary.judge = Some(correct as f64 / judged as f64);
    }
    ScoreReport { summary, records }
}

#[derive(Debug, thiserror::Error)]
pub enum ClassifyError {
    #[error("trajectory was aborted")]
    Aborted,
    #[error("judge failed: {0}")]
    Judge(#[from] LlmError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Refusal, hallucination or gold leak for a run over a corpus with the
/// gold passages removed.
pub fn classify_trajectory(
    trajectory: &Trajectory,
    example: &QaExample,
    judge: &dyn ChatModel,
    settings: &JudgeSettings,
) -> Result<(UnavailableClass, Option<String>), ClassifyError> {
    let (verdict, warning) = match (trajectory.outcome, &trajectory.answer) {
        (OutcomeKind::Aborted, _) => return Err(ClassifyError::Aborted),
        (OutcomeKind::Answer, Some(answer)) => {
            let j = judge_answer(&example.question, answer, &example.gold_answers, judge, settings)?;
            (Some(j.verdict), j.warning)
        }
        _ => (None, None),
    };
    Ok((classify_unavailable(trajectory.outcome, verdict)?, warning))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnavailableReport {
    pub rates: Option<UnavailableRates>,
    pub records: Vec<EvalRecord>,
    pub errors: usize,
    pub unmatched_trajectories: usize,
}

pub fn unavailable_report(
    trajectories: &[Trajectory],
    examples: &[QaExample],
    judge: &dyn ChatModel,
    settings: &JudgeSettings,
) -> UnavailableReport {
    let examples = by_id(examples);
    let mut records = Vec::new();
    let mut classes = Vec::new();
    let mut errors = 0;
    let mut unmatched = 0;
    for t in trajectories {
        let Some(ex) = examples.get(t.question_id.as_str()) else {
            unmatched += 1;
            continue;
        };
        match classify_trajectory(t, ex, judge, settings) {
            Ok((class, _)) => {
                let prediction = t.answer.as_deref().unwrap_or_default();
                let answered = t.answer.is_some();
                records.push(EvalRecord {
                    question_id: t.question_id.clone(),
                    em: if answered { exact_match(prediction, &ex.gold_answers) } else { 0 },
                    f1: if answered { word_f1(prediction, &ex.gold_answers) } else { 0.0 },
                    judge: match class {
                        UnavailableClass::GoldLeak => Some(Verdict::Correct),
                        UnavailableClass::Hallucination => Some(Verdict::Incorrect),
                        UnavailableClass::Refusal => None,
                    },
                    unavailable_class: Some(class),
                });
                classes.push(class);
            }
            Err(e) => {
                tracing::warn!(question = %t.question_id, error = %e, "not classified");
                errors += 1;
            }
        }
    }
    UnavailableReport { rates: unavailable_rates(&classes).ok(), records, errors, unmatched_trajectories: unmatched }
}

/// Proposes intent groups over a trajectory's retrieval queries, as lists
/// of 0-based query positions.
pub trait IntentGrouper {
    fn group(&self, queries: &[String]) -> Result<Vec<Vec<usize>>, String>;
}

/// Groups queries whose analyzed tokens are identical.
pub struct ExactMatchGrouper;

impl IntentGrouper for ExactMatchGrouper {
    fn group(&self, queries: &[String]) -> Result<Vec<Vec<usize>>, String> {
        Ok(exact_match_grouping(queries))
    }
}

/// Asks a chat model to group queries by the fact they seek.
pub struct LlmGrouper<'a> {
    pub model: &'a dyn ChatModel,
    pub decoding: Decoding,
}

impl IntentGrouper for LlmGrouper<'_> {
    fn group(&self, queries: &[String]) -> Result<Vec<Vec<usize>>, String> {
        let listing = queries.iter().enumerate().map(|(i, q)| format!("{i}: {q}")).collect::<Vec<_>>().join("\n");
        let messages = [
            ChatMessage::system(
                "Group search queries by the underlying information need they pursue. Queries that look for the \
                 same missing fact belong together, even if worded differently. Reply with only a JSON array of \
                 arrays of query numbers, e.g. [[0,2],[1]].",
            ),
            ChatMessage::user(format!("Queries:\n{listing}")),
        ];
        let reply = self.model.chat(&messages, &[], self.decoding).map_err(|e| e.to_string())?;
        let text = reply.content;
        let (Some(start), Some(end)) = (text.find('['), text.rfind(']')) else {
            return Err(format!("no JSON array in grouping reply {text:?}"));
        };
        serde_json::from_str(&text[start..=end]).map_err(|e| format!("bad grouping reply: {e}"))
    }
}

/// Decides whether a retrieval turn found something relevant.
pub trait RelevanceJudge {
    fn turn_success(&self, example: &QaExample, retrieved: &[String], observation: &str) -> Result<bool, String>;
}

/// Success iff a gold passage is among the retrieved ids.
pub struct GoldPassageRelevance;

impl RelevanceJudge for GoldPassageRelevance {
    fn turn_success(&self, example: &QaExample, retrieved: &[String], _: &str) -> Result<bool, String> {
        Ok(retrieved.iter().any(|id| example.gold_passage_ids.contains(id)))
    }
}

pub const DEFAULT_RELEVANCE_PROMPT: &str = "Question: {question}\n\nRetrieved passages:\n{passages}\n\n\
Does at least one passage contain information needed to answer the question? Reply with exactly one word: yes or no.";

/// Asks a chat model; `prompt` may use `{question}` and `{passages}`.
pub struct LlmRelevance<'a> {
    pub model: &'a dyn ChatModel,
    pub decoding: Decoding,
    pub prompt: String,
}

impl RelevanceJudge for LlmRelevance<'_> {
    fn turn_success(&self, example: &QaExample, _: &[String], observation: &str) -> Result<bool, String> {
        let prompt = self.prompt.replace("{question}", &example.question).replace("{passages}", observation);
        let reply = self.model.chat(&[ChatMessage::user(prompt)], &[], self.decoding).map_err(|e| e.to_string())?;
        match reply.content.split_whitespace().next().map(|w| w.trim_matches(|c: char| !c.is_alphabetic()).to_lowercase()) {
            Some(w) if w == "yes" => Ok(true),
            Some(w) if w == "no" => Ok(false),
            _ => Err(format!("unparseable relevance reply {:?}", reply.content)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroupedTrajectory {
    pub question_id: String,
    pub groups: Vec<IntentGroup>,
    /// The grouper failed and exact-match grouping was used.
    pub used_fallback: bool,
}

/// Retrieval turns of a trajectory (searches that executed) as metric
/// inputs, with results cut to `top_k`.
pub fn retrieval_turns(
    trajectory: &Trajectory,
    example: Option<&QaExample>,
    relevance: &dyn RelevanceJudge,
    top_k: usize,
) -> Vec<GroupTurn> {
    trajectory
        .turns
        .iter()
        .filter(|t| t.parse_ok && t.error.is_none())
        .map(|t| {
            let retrieved: Vec<String> = t.retrieved.iter().take(top_k).map(|d| d.doc_id.clone()).collect();
            let success = example.and_then(|ex| match relevance.turn_success(ex, &retrieved, &t.observation) {
                Ok(s) => Some(s),
                Err(e) => {
                    tracing::warn!(question = %trajectory.question_id, turn = t.turn_index, error = %e, "no relevance label");
                    None
                }
            });
            GroupTurn { turn_index: t.turn_index, query: t.query.clone(), retrieved, success }
        })
        .collect()
}

/// Groups a trajectory's retrieval turns by intent. The result always
/// partitions the turns; a failing grouper falls back to exact matching.
pub fn group_intents(question_id: &str, turns: &[GroupTurn], grouper: &dyn IntentGrouper) -> GroupedTrajectory {
    let queries: Vec<String> = turns.iter().map(|t| t.query.clone()).collect();
    let (proposed, used_fallback) = match grouper.group(&queries) {
        Ok(p) => (p, false),
        Err(e) => {
            tracing::warn!(question = %question_id, error = %e, "intent grouping failed, using exact-match fallback");
            (exact_match_grouping(&queries), true)
        }
    };
    let partition = repair_partition(turns.len(), &proposed);
    GroupedTrajectory { question_id: question_id.to_owned(), groups: assemble_groups(turns, &partition), used_fallback }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryReport {
    pub trajectories: usize,
    pub retrieval_turns: usize,
    pub groups: usize,
    pub repeated_groups: usize,
    pub fallback_groupings: usize,
    /// `None` when no group has two or more turns.
    pub same_intent_overlap: Option<f64>,
    /// `None` when no group is recoverable.
    pub intent_recovery: Option<f64>,
    pub grouped: Vec<GroupedTrajectory>,
}

/// Overlap and recovery macro-averaged over every intent group of every
/// trajectory.
pub fn trajectory_metrics(
    trajectories: &[Trajectory],
    examples: &[QaExample],
    grouper: &dyn IntentGrouper,
    relevance: &dyn RelevanceJudge,
    top_k: usize,
) -> TrajectoryReport {
    let examples = by_id(examples);
    let mut grouped = Vec::new();
    let mut turns_total = 0;
    for t in trajectories {
        let turns = retrieval_turns(t, examples.get(t.question_id.as_str()).copied(), relevance, top_k);
        turns_total += turns.len();
        if !turns.is_empty() {
            grouped.push(group_intents(&t.question_id, &turns, grouper));
        }
    }
    // intent ids are per trajectory; renumber so they stay unique across the set
    let all: Vec<IntentGroup> = grouped
        .iter()
        .flat_map(|g| g.groups.iter().cloned())
        .enumerate()
        .map(|(i, mut g)| {
            g.intent_id = i;
            g
        })
        .collect();
    let recoverable: Vec<IntentGroup> = all
        .iter()
        .filter(|g| g.turns.len() >= 2 && g.turns.iter().all(|t| t.success.is_some()))
        .cloned()
        .collect();
    TrajectoryReport {
        trajectories: trajectories.len(),
        retrieval_turns: turns_total,
        groups: all.len(),
        repeated_groups: all.iter().filter(|g| g.turns.len() >= 2).count(),
        fallback_groupings: grouped.iter().filter(|g| g.used_fallback).count(),
        same_intent_overlap: same_intent_overlap(&all).ok(),
        intent_recovery: intent_recovery(&recoverable).ok(),
        grouped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llm::{AssistantReply, ScriptedModel};

    fn golds() -> Vec<String> {
        vec!["Antonio Lucio Vivaldi".into()]
    }

    #[test]
    fn verdict_parsing() {
        assert_eq!(parse_verdict("Correct."), Some(Verdict::Correct));
        assert_eq!(parse_verdict("  incorrect - wrong person"), Some(Verdict::Incorrect));
        assert_eq!(parse_verdict("maybe"), None);
        assert_eq!(parse_verdict(""), None);
    }

    #[test]
    fn judge_falls_back_after_two_garbage_replies() {
        let m = ScriptedModel::new([AssistantReply::text("???"), AssistantReply::text("hmm")]);
        let j = judge_answer("q", "x", &golds(), &m, &JudgeSettings::default()).unwrap();
        assert_eq!(j.verdict, Verdict::Incorrect);
        assert!(j.warning.is_some());
        assert_eq!(m.requests().len(), 2);
        assert_eq!(m.requests()[0].1.temperature, 0.3);
    }

    #[test]
    fn judge_retries_once_then_accepts() {
        let m = ScriptedModel::new([AssistantReply::text("???"), AssistantReply::text("correct")]);
        let j = judge_answer("q", "Antonio Vivaldi", &golds(), &m, &JudgeSettings::default()).unwrap();
        assert_eq!(j, Judgement { verdict: Verdict::Correct, warning: None });
    }

    #[test]
    fn judge_transport_failure_is_an_error() {
        let m = ScriptedModel::with_results([
            Err(LlmError::Transport("down".into())),
            Err(LlmError::Transport("down".into())),
            Err(LlmError::Transport("down".into())),
        ]);
        assert!(judge_answer("q", "x", &golds(), &m, &JudgeSettings::default()).is_err());
    }

    struct Omits;
    impl IntentGrouper for Omits {
        fn group(&self, _: &[String]) -> Result<Vec<Vec<usize>>, String> {
            Ok(vec![vec![0, 1]])
        }
    }

    struct Broken;
    impl IntentGrouper for Broken {
        fn group(&self, _: &[String]) -> Result<Vec<Vec<usize>>, String> {
            Err("offline".into())
        }
    }

    fn turns(queries: &[&str]) -> Vec<GroupTurn> {
        queries
            .iter()
            .enumerate()
            .map(|(i, q)| GroupTurn { turn_index: i as u32 + 1, query: q.to_string(), retrieved: vec![], success: None })
            .collect()
    }

    #[test]
    fn omitted_turn_becomes_singleton() {
        let g = group_intents("q", &turns(&["vivaldi birth", "vivaldi born 1678", "griselda libretto"]), &Omits);
        assert_eq!(g.groups.len(), 2);
        assert_eq!(g.groups[1].turns[0].query, "griselda libretto");
        assert!(!g.used_fallback);
    }

    #[test]
    fn failing_grouper_uses_fallback() {
        let g = group_intents("q", &turns(&["Vivaldi", "vivaldi", "opera"]), &Broken);
        assert!(g.used_fallback);
        assert_eq!(g.groups.len(), 2);
    }

    #[test]
    fn llm_grouper_reads_json() {
        let m = ScriptedModel::new([AssistantReply::text("Groups: [[0, 1], [2]]")]);
        let g = LlmGrouper { model: &m, decoding: Decoding { temperature: 0.0, top_p: 1.0 } };
        assert_eq!(g.group(&["a".into(), "b".into(), "c".into()]).unwrap(), vec![vec![0, 1], vec![2]]);
        let m = ScriptedModel::new([AssistantReply::text("no idea")]);
        let g = LlmGrouper { model: &m, decoding: Decoding { temperature: 0.0, top_p: 1.0 } };
        assert!(g.group(&["a".into()]).is_err());
    }
}
