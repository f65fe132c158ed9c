//! Question-to-context retrieval: embed the stem, scan the index, optionally
//! re-score a candidate pool with a rerank service, and flag whether the top
//! hit came from the question's own lesson.

mod rerank;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Dataset, Question};
use crate::embedder::{EmbedError, Embedder};
use crate::vectorstore::{IndexEntry, Metric, SearchHit, StoreError, VectorIndex};

pub use rerank::{
    rerank_hits, CohereReranker, LexicalReranker, RerankScore, RerankServiceConfig, Reranker,
    RerankerKind,
};

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("index was built with model `{index}` but the embedder uses `{embedder}`")]
    ModelIdMismatch { index: String, embedder: String },
    #[error("rerank service unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("rerank service rejected credentials: {0}")]
    Auth(String),
    #[error("malformed rerank response: {0}")]
    MalformedServiceResponse(String),
    #[error("rerank requested but no rerank service is configured")]
    MissingReranker,
    #[error("no candidates to rerank")]
    NoCandidates,
    #[error("empty input")]
    EmptyInput,
    #[error("invalid retrieval configuration: {0}")]
    Config(String),
    #[error("topic {0} is in the index but not in the corpus")]
    UnknownTopic(String),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub type Result<T, E = RetrievalError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RetrievalConfig {
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    #[serde(default)]
    pub metric: Metric,
    #[serde(default)]
    pub rerank: bool,
    #[serde(default = "default_rerank_model")]
    pub rerank_model_id: String,
    #[serde(default = "default_candidates")]
    pub rerank_candidates: usize,
    /// Serve unreranked hits when the rerank service is down.
    #[serde(default)]
    pub rerank_fallback: bool,
}

fn default_top_k() -> usize {
    1
}
fn default_rerank_model() -> String {
    "rerank-english-v2.0".into()
}
fn default_candidates() -> usize {
    10
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        RetrievalConfig {
            top_k: default_top_k(),
            metric: Metric::Dot,
            rerank: false,
            rerank_model_id: default_rerank_model(),
            rerank_candidates: default_candidates(),
            rerank_fallback: false,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.top_k == 0 {
            return Err(RetrievalError::Config("top_k must be at least 1".into()));
        }
        if self.rerank_candidates < self.top_k {
            return Err(RetrievalError::Config(format!(
                "rerank_candidates ({}) must be >= top_k ({})",
                self.rerank_candidates, self.top_k
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievedContext {
    pub question_id: String,
    pub hits: Vec<SearchHit>,
    pub rerank_applied: bool,
    /// The rank-1 hit belongs to the question's lesson.
    pub in_lesson: bool,
}

/// Embeds every topic of the corpus and builds the index.
pub fn index_corpus(ds: &Dataset, embedder: &Embedder) -> Result<VectorIndex> {
    let topics = ds.topics();
    if topics.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let texts: Vec<String> = topics.iter().map(|t| embedder.config().topic_text(t)).collect();
    let vectors = embedder.embed_texts(&texts)?;
    let items = topics
        .iter()
        .zip(vectors)
        .map(|(t, vector)| IndexEntry {
            topic_id: t.topic_id.clone(),
            lesson_id: t.lesson_id.clone(),
            vector,
        })
        .collect();
    Ok(VectorIndex::build(items, embedder.model_id())?)
}

/// Everything needed to answer `retrieve` for many questions.
pub struct Retriever<'a> {
    ds: &'a Dataset,
    index: &'a VectorIndex,
    embedder: &'a Embedder,
    reranker: Option<&'a dyn Reranker>,
    cfg: RetrievalConfig,
}

impl<'a> Retriever<'a> {
    pub fn new(
        ds: &'a Dataset,
        index: &'a VectorIndex,
        embedder: &'a Embedder,
        reranker: Option<&'a dyn Reranker>,
        cfg: RetrievalConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if index.model_id() != embedder.model_id() {
            return Err(RetrievalError::ModelIdMismatch {
                index: index.model_id().to_string(),
                embedder: embedder.model_id().to_string(),
            });
        }
        if cfg.rerank && reranker.is_none() {
            return Err(RetrievalError::MissingReranker);
        }
        Ok(Retriever {
            ds,
            index,
            embedder,
            reranker,
            cfg,
        })
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.cfg
    }

    pub fn retrieve(&self, q: &Question) -> Result<RetrievedContext> {
        let query = self.embedder.embed_one(&q.stem)?;
        let (hits, rerank_applied) = if self.cfg.rerank {
            let pool = self
                .index
                .search(&query, self.cfg.rerank_candidates, self.cfg.metric)?;
            self.reranked(&q.stem, pool)?
        } else {
            (self.index.search(&query, self.cfg.top_k, self.cfg.metric)?, false)
        };
        let in_lesson = hits.first().is_some_and(|h| h.lesson_id == q.lesson_id);
        Ok(RetrievedContext {
            question_id: q.question_id.clone(),
            hits,
            rerank_applied,
            in_lesson,
        })
    }

    fn reranked(&self, query: &str, mut pool: Vec<SearchHit>) -> Result<(Vec<SearchHit>, bool)> {
        let reranker = self.reranker.ok_or(RetrievalError::MissingReranker)?;
        let candidates = pool
            .iter()
            .map(|h| {
                self.ds
                    .topic(&h.topic_id)
                    .map(|t| (h.topic_id.clone(), t.text.clone()))
                    .ok_or_else(|| RetrievalError::UnknownTopic(h.topic_id.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        match rerank_hits(query, &candidates, reranker) {
            Ok(order) => {
                let hits = order
                    .into_iter()
                    .take(self.cfg.top_k)
                    .enumerate()
                    .map(|(r, (topic_id, score))| {
                        let lesson_id = pool
                            .iter()
                            .find(|h| h.topic_id == topic_id)
                            .map(|h| h.lesson_id.clone())
                            .expect("rerank preserves ids");
                        SearchHit {
                            topic_id,
                            lesson_id,
                            score,
                            rank: r + 1,
                        }
                    })
                    .collect();
                Ok((hits, true))
            }
            Err(RetrievalError::ProviderUnavailable(msg)) if self.cfg.rerank_fallback => {
                log::warn!("rerank unavailable ({msg}); serving unreranked hits");
                pool.truncate(self.cfg.top_k);
                Ok((pool, false))
            }
            Err(e) => Err(e),
        }
    }
}

/// Fraction of contexts whose top hit is in the question's own lesson.
pub fn in_lesson_rate(contexts: &[RetrievedContext]) -> Result<f64> {
    if contexts.is_empty() {
        return Err(RetrievalError::EmptyInput);
    }
    let hits = contexts.iter().filter(|c| c.in_lesson).count();
    Ok(hits as f64 / contexts.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(in_lesson: bool) -> RetrievedContext {
        RetrievedContext {
            question_id: "q".into(),
            hits: vec![],
            rerank_applied: false,
            in_lesson,
        }
    }

    #[test]
    fn rate_arithmetic() {
        let mut v: Vec<_> = (0..100).map(|i| ctx(i < 44)).collect();
        assert_eq!(in_lesson_rate(&v).unwrap(), 0.44);
        v.reverse();
        assert_eq!(in_lesson_rate(&v).unwrap(), 0.44);
        assert_eq!(in_lesson_rate(&[ctx(true), ctx(true)]).unwrap(), 1.0);
        assert!(matches!(in_lesson_rate(&[]), Err(RetrievalError::EmptyInput)));
    }

    #[test]
    fn config_rules() {
        assert!(RetrievalConfig::default().validate().is_ok());
        let bad = RetrievalConfig {
            top_k: 5,
            rerank_candidates: 3,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let zero = RetrievalConfig {
            top_k: 0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
    }
}
