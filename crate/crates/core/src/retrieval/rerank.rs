//! Second-stage re-scoring of retrieved candidates.
//!
//! The HTTP client speaks the Cohere-style rerank shape:
//! request `{model, query, documents: [..]}`, response
//! `{results: [{index, relevance_score}]}` with indices into `documents`.

use std::collections::HashSet;
use std::time::Duration;

use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

use super::{Result, RetrievalError};
use crate::embedder::tokenize;
use crate::http::{self, CallError, RetryPolicy};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankScore {
    pub index: usize,
    pub relevance_score: f64,
}

pub trait Reranker: Send + Sync {
    /// Relevance of every document to `query`, keyed by document position.
    fn score(&self, query: &str, documents: &[String]) -> Result<Vec<RerankScore>>;
}

/// Reorders `candidates` by descending relevance; equal scores keep their
/// incoming order. The output carries exactly the input ids.
pub fn rerank_hits(
    question_text: &str,
    candidates: &[(String, String)],
    reranker: &dyn Reranker,
) -> Result<Vec<(String, f64)>> {
    if candidates.is_empty() {
        return Err(RetrievalError::NoCandidates);
    }
    let documents: Vec<String> = candidates.iter().map(|(_, text)| text.clone()).collect();
    let scores = reranker.score(question_text, &documents)?;
    if scores.len() != candidates.len() {
        return Err(RetrievalError::MalformedServiceResponse(format!(
            "{} scores for {} documents",
            scores.len(),
            candidates.len()
        )));
    }
    let mut seen = HashSet::new();
    for s in &scores {
        if s.index >= candidates.len() || !seen.insert(s.index) {
            return Err(RetrievalError::MalformedServiceResponse(format!(
                "bad or repeated document index {}",
                s.index
            )));
        }
        if !s.relevance_score.is_finite() {
            return Err(RetrievalError::MalformedServiceResponse(format!(
                "non-finite score for document {}",
                s.index
            )));
        }
    }
    let mut ordered = scores;
    ordered.sort_by(|a, b| {
        b.relevance_score
            .total_cmp(&a.relevance_score)
            .then(a.index.cmp(&b.index))
    });
    Ok(ordered
        .into_iter()
        .map(|s| (candidates[s.index].0.clone(), s.relevance_score))
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RerankerKind {
    Http,
    /// In-process lexical overlap scorer; needs no network.
    #[default]
    LexicalLocal,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RerankServiceConfig {
    #[serde(default)]
    pub kind: RerankerKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default = "default_model")]
    pub model_id: String,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_model() -> String {
    "rerank-english-v2.0".into()
}
fn default_retries() -> u32 {
    3
}
fn default_timeout() -> u64 {
    30
}

impl Default for RerankServiceConfig {
    fn default() -> Self {
        RerankServiceConfig {
            kind: RerankerKind::LexicalLocal,
            endpoint: None,
            model_id: default_model(),
            api_key_env: None,
            max_retries: default_retries(),
            timeout_secs: default_timeout(),
        }
    }
}

impl RerankServiceConfig {
    pub fn is_remote(&self) -> bool {
        self.kind == RerankerKind::Http
    }

    pub fn build(&self) -> Result<Box<dyn Reranker>> {
        match self.kind {
            RerankerKind::LexicalLocal => Ok(Box::new(LexicalReranker)),
            RerankerKind::Http => Ok(Box::new(CohereReranker::from_config(self)?)),
        }
    }
}

pub struct CohereReranker {
    client: Client,
    endpoint: String,
    model_id: String,
    api_key_env: Option<String>,
    retry: RetryPolicy,
}

#[derive(Serialize)]
struct Request<'a> {
    model: &'a str,
    query: &'a str,
    documents: &'a [String],
}

#[derive(Deserialize)]
struct Response {
    results: Vec<RerankScore>,
}

fn map_err(e: CallError) -> RetrievalError {
    match e {
        CallError::Auth(m) => RetrievalError::Auth(m),
        CallError::Fatal(m) if m.starts_with("undecodable") => RetrievalError::MalformedServiceResponse(m),
        other => RetrievalError::ProviderUnavailable(other.message().to_string()),
    }
}

impl CohereReranker {
    pub fn from_config(cfg: &RerankServiceConfig) -> Result<Self> {
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| RetrievalError::Config("http reranker needs an endpoint".into()))?;
        Ok(CohereReranker {
            client: http::client(Duration::from_secs(cfg.timeout_secs)).map_err(map_err)?,
            endpoint,
            model_id: cfg.model_id.clone(),
            api_key_env: cfg.api_key_env.clone(),
            retry: RetryPolicy::with_retries(cfg.max_retries),
        })
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }
}

impl Reranker for CohereReranker {
    fn score(&self, query: &str, documents: &[String]) -> Result<Vec<RerankScore>> {
        let token = http::bearer_token(self.api_key_env.as_deref()).map_err(map_err)?;
        let body = Request {
            model: &self.model_id,
            query,
            documents,
        };
        let resp: Response = self
            .retry
            .run(|_| {
                let mut req = self.client.post(&self.endpoint).json(&body);
                if let Some(t) = &token {
                    req = req.bearer_auth(t);
                }
                let resp = req.send()?;
                if !resp.status().is_success() {
                    return Err(http::status_error(resp));
                }
                Ok(resp.json::<Response>()?)
            })
            .map_err(map_err)?;
        Ok(resp.results)
    }
}

/// Scores a document by the number of distinct query terms (three or more
/// characters) it contains, damped by the square root of its vocabulary size.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalReranker;

impl Reranker for LexicalReranker {
    fn score(&self, query: &str, documents: &[String]) -> Result<Vec<RerankScore>> {
        let terms: HashSet<String> = tokenize(query).into_iter().filter(|t| t.chars().count() >= 3).collect();
        Ok(documents
            .iter()
            .enumerate()
            .map(|(index, doc)| {
                let vocab: HashSet<String> = tokenize(doc).into_iter().collect();
                let overlap = terms.iter().filter(|t| vocab.contains(*t)).count() as f64;
                let relevance_score = if vocab.is_empty() {
                    0.0
                } else {
                    overlap / (vocab.len() as f64).sqrt()
                };
                RerankScore { index, relevance_score }
            })
            .collect())
    }
}
