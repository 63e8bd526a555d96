//! Embedding clients and dense index construction.

use lexrag_core::dense::{DenseError, DenseIndex};
use lexrag_core::Document;
use serde::{Deserialize, Serialize};
use std::time::Duration;

/// Instruction prepended to search queries (not passages) by
/// instruction-tuned embedding models.
pub const DEFAULT_QUERY_INSTRUCTION: &str =
    "Given a web search query, retrieve relevant passages that answer the query";

#[derive(Debug, thiserror::Error)]
pub enum EmbedError {
    #[error("embedding request failed: {0}")]
    Transport(String),
    #[error("embedding service returned HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed embedding response: {0}")]
    Malformed(String),
    #[error("embedding service returned {got} vectors for {sent} inputs")]
    CountMismatch { sent: usize, got: usize },
    #[error(transparent)]
    Dense(#[from] DenseError),
}

pub trait Embedder: Send + Sync {
    /// One vector per text. `as_query` selects the query-side instruction.
    fn embed(&self, texts: &[String], as_query: bool) -> Result<Vec<Vec<f32>>, EmbedError>;

    fn embed_query(&self, text: &str) -> Result<Vec<f32>, EmbedError> {
        let mut out = self.embed(&[text.to_owned()], true)?;
        match out.len() {
            1 => Ok(out.pop().unwrap()),
            got => Err(EmbedError::CountMismatch { sent: 1, got }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSettings {
    pub url: String,
    pub model: String,
    pub instruction: String,
    pub api_key: Option<String>,
    pub batch_size: usize,
    pub timeout_secs: u64,
}

impl Default for EmbeddingSettings {
    fn default() -> Self {
        EmbeddingSettings {
            url: "http://127.0.0.1:8081/v1/embeddings".into(),
            model: "Qwen3-Embedding-0.6B".into(),
            instruction: DEFAULT_QUERY_INSTRUCTION.into(),
            api_key: None,
            batch_size: 64,
            timeout_secs: 60,
        }
    }
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    model: &'a str,
    input: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    instruction: Option<&'a str>,
}

#[derive(Deserialize)]
struct EmbedResponse {
    data: Vec<EmbedDatum>,
}

#[derive(Deserialize)]
struct EmbedDatum {
    embedding: Vec<f32>,
}

/// Client for `POST {model, input, instruction}` -> `{data: [{embedding}]}`.
pub struct HttpEmbedder {
    client: reqwest::blocking::Client,
    settings: EmbeddingSettings,
}

impl HttpEmbedder {
    pub fn new(settings: EmbeddingSettings) -> Result<Self, EmbedError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(settings.timeout_secs))
            .build()
            .map_err(|e| EmbedError::Transport(e.to_string()))?;
        Ok(HttpEmbedder { client, settings })
    }
}

impl Embedder for HttpEmbedder {
    fn embed(&self, texts: &[String], as_query: bool) -> Result<Vec<Vec<f32>>, EmbedError> {
        let body = EmbedRequest {
            model: &self.settings.model,
            input: texts,
            instruction: as_query.then_some(self.settings.instruction.as_str()),
        };
        let mut req = self.client.post(&self.settings.url).json(&body);
        if let Some(key) = &self.settings.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| EmbedError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(EmbedError::Status { status: status.as_u16(), body });
        }
        let parsed: EmbedResponse = resp.json().map_err(|e| EmbedError::Malformed(e.to_string()))?;
        if parsed.data.len() != texts.len() {
            return Err(EmbedError::CountMismatch { sent: texts.len(), got: parsed.data.len() });
        }
        Ok(parsed.data.into_iter().map(|d| d.embedding).collect())
    }
}

/// Text embedded for a passage.
pub fn passage_text(doc: &Document) -> String {
    match (doc.title.is_empty(), doc.content.is_empty()) {
        (true, _) => doc.content.clone(),
        (false, true) => doc.title.clone(),
        (false, false) => format!("{}\n{}", doc.title, doc.content),
    }
}

/// Embeds every passage in batches; the index takes its dimension from the
/// first vector returned.
pub fn embed_corpus(corpus: &[Document], embedder: &dyn Embedder, batch_size: usize) -> Result<Vec<Vec<f32>>, EmbedError> {
    let mut vectors = Vec::with_capacity(corpus.len());
    for chunk in corpus.chunks(batch_size.max(1)) {
        let texts: Vec<String> = chunk.iter().map(passage_text).collect();
        let got = embedder.embed(&texts, false)?;
        if got.len() != texts.len() {
            return Err(EmbedError::CountMismatch { sent: texts.len(), got: got.len() });
        }
        vectors.extend(got);
    }
    Ok(vectors)
}

pub fn build_dense_index(corpus: &[Document], vectors: &[Vec<f32>]) -> Result<DenseIndex, EmbedError> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut index = DenseIndex::new(dim)?;
    for (doc, v) in corpus.iter().zip(vectors) {
        index.insert(doc.doc_id.clone(), v)?;
    }
    Ok(index)
}
