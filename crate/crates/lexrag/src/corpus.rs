//! JSONL corpus and QA fixture readers.

use lexrag_core::eval::QaExample;
use lexrag_core::Document;
use serde_json::Value;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("line {line}: missing field {field}")]
    MissingField { line: usize, field: &'static str },
    #[error("empty corpus")]
    EmptyCorpus,
}

fn open(path: &Path) -> Result<BufReader<File>, CorpusError> {
    File::open(path).map(BufReader::new).map_err(|source| CorpusError::Io { path: path.to_owned(), source })
}

/// Non-blank lines with 1-based line numbers, parsed as JSON objects.
fn json_lines<'a, R: BufRead + 'a>(reader: R, path: &'a Path) -> impl Iterator<Item = Result<(usize, serde_json::Map<String, Value>), CorpusError>> + 'a {
    reader.lines().enumerate().filter_map(move |(i, line)| {
        let line_no = i + 1;
        let line = match line {
            Ok(l) => l,
            Err(source) => return Some(Err(CorpusError::Io { path: path.to_owned(), source })),
        };
        if line.trim().is_empty() {
            return None;
        }
        Some(match serde_json::from_str::<Value>(&line) {
            Ok(Value::Object(map)) => Ok((line_no, map)),
            Ok(_) => Err(CorpusError::Malformed { line: line_no, message: "expected a JSON object".into() }),
            Err(e) => Err(CorpusError::Malformed { line: line_no, message: e.to_string() }),
        })
    })
}

fn string_field(obj: &serde_json::Map<String, Value>, line: usize, field: &'static str) -> Result<String, CorpusError> {
    match obj.get(field) {
        None | Some(Value::Null) => Err(CorpusError::MissingField { line, field }),
        Some(Value::String(s)) => Ok(s.clone()),
        Some(other) => Err(CorpusError::Malformed { line, message: format!("field {field} must be a string, got {other}") }),
    }
}

fn string_list(obj: &serde_json::Map<String, Value>, line: usize, field: &'static str, required: bool) -> Result<Vec<String>, CorpusError> {
    match obj.get(field) {
        None | Some(Value::Null) if !required => Ok(Vec::new()),
        None | Some(Value::Null) => Err(CorpusError::MissingField { line, field }),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::String(s) => Ok(s.clone()),
                other => Err(CorpusError::Malformed { line, message: format!("field {field} must hold strings, got {other}") }),
            })
            .collect(),
        Some(other) => Err(CorpusError::Malformed { line, message: format!("field {field} must be a list, got {other}") }),
    }
}

/// Reads `{id, title, contents}` objects, one per line, in file order.
pub fn ingest_jsonl(path: &Path) -> Result<Vec<Document>, CorpusError> {
    read_documents(open(path)?, path)
}

pub fn read_documents<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for item in json_lines(reader, path) {
        let (line, obj) = item?;
        let id = string_field(&obj, line, "id")?;
        let title = string_field(&obj, line, "title")?;
        let contents = string_field(&obj, line, "contents")?;
        docs.push(Document::new(id, title, contents));
    }
    if docs.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    Ok(docs)
}

/// Reads `{id, question, answers, gold_passage_ids}` objects.
pub fn read_qa_jsonl(path: &Path) -> Result<Vec<QaExample>, CorpusError> {
    let mut out = Vec::new();
    for item in json_lines(open(path)?, path) {
        let (line, obj) = item?;
        let example = QaExample {
            question_id: string_field(&obj, line, "id")?,
            question: string_field(&obj, line, "question")?,
            gold_answers: string_list(&obj, line, "answers", true)?,
            gold_passage_ids: string_list(&obj, line, "gold_passage_ids", false)?,
        };
        if example.gold_answers.is_empty() {
            return Err(CorpusError::Malformed { line, message: "answers must not be empty".into() });
        }
        out.push(example);
    }
    Ok(out)
}
