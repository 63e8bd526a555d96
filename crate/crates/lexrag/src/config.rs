//! TOML configuration. Every retrieval and generation setting lives here;
//! API keys may instead come from the environment.

use crate::agent::AgentConfig;
use crate::embed::EmbeddingSettings;
use crate::eval::{JudgeSettings, DEFAULT_RELEVANCE_PROMPT};
use crate::llm::LlmSettings;
use crate::retrieval::Backend;
use lexrag_core::fusion::FusionConfig;
use lexrag_core::Bm25Params;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

pub const LLM_KEY_ENV: &str = "LEXRAG_LLM_API_KEY";
pub const EMBEDDING_KEY_ENV: &str = "LEXRAG_EMBEDDING_API_KEY";

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceSettings {
    pub listen: String,
    /// Index directory written by `lexrag index build`.
    pub index: PathBuf,
    /// Dense index file; required when `hybrid` is on.
    pub dense_index: Option<PathBuf>,
    pub hybrid: bool,
}

impl Default for ServiceSettings {
    fn default() -> Self {
        ServiceSettings { listen: "127.0.0.1:8080".into(), index: PathBuf::from("index"), dense_index: None, hybrid: false }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSettings {
    /// Passages per turn considered by trajectory metrics.
    pub top_k: usize,
    /// Size of the answer-unavailable subset.
    pub unavailable_subset: usize,
    /// Prompt for per-turn relevance; `{question}` and `{passages}` are filled in.
    pub relevance_prompt: String,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { top_k: 5, unavailable_subset: 400, relevance_prompt: DEFAULT_RELEVANCE_PROMPT.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub service: ServiceSettings,
    pub bm25: Bm25Params,
    pub fusion: FusionConfig,
    pub embedding: EmbeddingSettings,
    pub llm: LlmSettings,
    pub agent: AgentConfig,
    pub judge: JudgeSettings,
    pub eval: EvalSettings,
}

impl Config {
    /// Reads, resolves relative paths against the file's directory, applies
    /// environment overrides and validates.
    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        let mut config = Config::from_toml(&text).map_err(|source| ConfigError::Parse { path: path.to_owned(), source })?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.apply_env(|k| std::env::var(k).ok());
        config.validate()?;
        Ok(config)
    }

    pub fn from_toml(text: &str) -> Result<Config, toml::de::Error> {
        toml::from_str(text)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.service.index);
        if let Some(d) = self.service.dense_index.as_mut() {
            fix(d);
        }
    }

    /// Environment values win over the file.
    pub fn apply_env(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(k) = get(LLM_KEY_ENV).filter(|k| !k.is_empty()) {
            self.llm.api_key = Some(k);
        }
        if let Some(k) = get(EMBEDDING_KEY_ENV).filter(|k| !k.is_empty()) {
            self.embedding.api_key = Some(k);
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| ConfigError::Invalid(m);
        self.bm25.validate().map_err(|e| invalid(format!("bm25: {e}")))?;
        self.fusion.validate().map_err(|e| invalid(format!("fusion: {e}")))?;
        self.agent.validate().map_err(|e| invalid(e.to_string()))?;
        if self.service.hybrid {
            if self.service.dense_index.is_none() {
                return Err(invalid("service.hybrid requires service.dense_index".into()));
            }
            if self.embedding.url.is_empty() {
                return Err(invalid("service.hybrid requires embedding.url".into()));
            }
        }
        if self.agent.backend == Backend::Hybrid && self.service.dense_index.is_none() {
            return Err(invalid("agent.backend = \"hybrid\" requires service.dense_index".into()));
        }
        if self.embedding.batch_size == 0 {
            return Err(invalid("embedding.batch_size must be at least 1".into()));
        }
        if self.eval.top_k == 0 {
            return Err(invalid("eval.top_k must be at least 1".into()));
        }
        if !(self.judge.temperature >= 0.0 && self.judge.top_p > 0.0 && self.judge.top_p <= 1.0) {
            return Err(invalid("judge decoding parameters out of range".into()));
        }
        Ok(())
    }
}
