//! Text embedding with pluggable providers and a persistent content-addressed
//! cache.
//!
//! Topics are embedded from their raw text (optionally title-prefixed) and
//! questions from their stem only; answer options never reach the embedder.

mod cache;
mod local;
mod remote;

use std::collections::{HashMap, HashSet};
use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Topic;
use crate::http::InFlightLimit;

pub use cache::{CacheError, CacheKey, EmbeddingCache, EmbeddingCacheEntry};
pub use local::{deterministic_embed, fnv1a64, tokenize, DeterministicLocal};
pub use remote::OpenAiEmbeddings;

#[derive(Debug, Error)]
pub enum EmbedError {
    #[error("no texts to embed")]
    EmptyInput,
    #[error("text #{index} is empty after trimming")]
    EmptyText { index: usize },
    #[error("dimension mismatch: expected {expected}, provider returned {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding provider unavailable: {0}")]
    ProviderUnavailable(String),
    #[error("embedding provider rejected credentials: {0}")]
    Auth(String),
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("invalid vector: {0}")]
    InvalidVector(String),
    #[error("invalid embedder configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Cache(#[from] CacheError),
}

pub type Result<T, E = EmbedError> = std::result::Result<T, E>;

/// A dense embedding. Values are finite and there is at least one of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(EmbedError::InvalidVector("zero-length vector".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(EmbedError::InvalidVector(format!("non-finite value at {i}")));
        }
        Ok(EmbeddingVector { values })
    }

    /// Builds from single-precision values, as most embedding services emit.
    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| v as f64).collect())
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * factor).collect())
    }
}

impl TryFrom<Vec<f64>> for EmbeddingVector {
    type Error = EmbedError;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Self::new(values)
    }
}

impl From<EmbeddingVector> for Vec<f64> {
    fn from(v: EmbeddingVector) -> Self {
        v.values
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    RemoteHttp,
    DeterministicLocal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedderConfig {
    pub provider: ProviderKind,
    pub model_id: String,
    pub dim: usize,
    #[serde(default)]
    pub endpoint: Option<String>,
    /// Environment variable holding the bearer token.
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    /// Prefix topic text with its title before embedding.
    #[serde(default)]
    pub include_title: bool,
}

fn default_batch_size() -> usize {
    64
}
fn default_retries() -> u32 {
    3
}
fn default_in_flight() -> usize {
    4
}
fn default_timeout() -> u64 {
    60
}

impl EmbedderConfig {
    pub fn deterministic(dim: usize) -> Self {
        EmbedderConfig {
            provider: ProviderKind::DeterministicLocal,
            model_id: format!("deterministic-local-{dim}"),
            dim,
            endpoint: None,
            api_key_env: None,
            batch_size: default_batch_size(),
            max_retries: default_retries(),
            max_in_flight: default_in_flight(),
            timeout_secs: default_timeout(),
            cache_dir: None,
            include_title: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(EmbedError::Config("dim must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(EmbedError::Config("batch_size must be at least 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(EmbedError::Config("model_id is empty".into()));
        }
        match self.provider {
            ProviderKind::DeterministicLocal if self.dim < 2 => {
                Err(EmbedError::Config("deterministic provider needs dim >= 2".into()))
            }
            ProviderKind::RemoteHttp if self.endpoint.is_none() => {
                Err(EmbedError::Config("remote provider needs an endpoint".into()))
            }
            _ => Ok(()),
        }
    }

    pub fn is_remote(&self) -> bool {
        self.provider == ProviderKind::RemoteHttp
    }

    /// The exact string embedded for a topic.
    pub fn topic_text(&self, topic: &Topic) -> String {
        match (&topic.title, self.include_title) {
            (Some(title), true) => format!("{title}\n{}", topic.text),
            _ => topic.text.clone(),
        }
    }
}

/// Backend producing raw vectors for a batch of texts.
pub trait EmbeddingProvider: Send + Sync {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>>;
}

/// Cache-fronted embedding client.
pub struct Embedder {
    cfg: EmbedderConfig,
    provider: Box<dyn EmbeddingProvider>,
    cache: Option<EmbeddingCache>,
    limit: InFlightLimit,
    provider_calls: AtomicUsize,
}

impl std::fmt::Debug for Embedder {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Embedder")
            .field("cfg", &self.cfg)
            .field("provider_calls", &self.provider_calls)
            .finish_non_exhaustive()
    }
}

impl Embedder {
    pub fn new(cfg: EmbedderConfig) -> Result<Self> {
        cfg.validate()?;
        let provider: Box<dyn EmbeddingProvider> = match cfg.provider {
            ProviderKind::DeterministicLocal => Box::new(DeterministicLocal::new(cfg.dim)),
            ProviderKind::RemoteHttp => Box::new(OpenAiEmbeddings::from_config(&cfg)?),
        };
        Self::with_provider(cfg, provider)
    }

    pub fn with_provider(cfg: EmbedderConfig, provider: Box<dyn EmbeddingProvider>) -> Result<Self> {
        cfg.validate()?;
        let cache = cfg.cache_dir.as_ref().map(EmbeddingCache::new);
        Ok(Embedder {
            limit: InFlightLimit::new(cfg.max_in_flight),
            cfg,
            provider,
            cache,
            provider_calls: AtomicUsize::new(0),
        })
    }

    pub fn config(&self) -> &EmbedderConfig {
        &self.cfg
    }

    pub fn model_id(&self) -> &str {
        &self.cfg.model_id
    }

    /// Number of batches sent to the provider so far.
    pub fn provider_calls(&self) -> usize {
        self.provider_calls.load(Ordering::Relaxed)
    }

    pub fn embed_one(&self, text: &str) -> Result<EmbeddingVector> {
        Ok(self
            .embed_texts(&[text.to_string()])?
            .pop()
            .expect("one vector per input"))
    }

    /// One vector per input, in input order. The cache is consulted first;
    /// only misses reach the provider, and fresh vectors are cached.
    pub fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(EmbedError::EmptyInput);
        }
        if let Some(index) = texts.iter().position(|t| t.trim().is_empty()) {
            return Err(EmbedError::EmptyText { index });
        }
        let keys: Vec<CacheKey> = texts
            .iter()
            .map(|t| CacheKey::new(&self.cfg.model_id, t))
            .collect();
        let mut found: HashMap<&CacheKey, EmbeddingVector> = HashMap::new();
        let mut pending: HashSet<&CacheKey> = HashSet::new();
        let mut misses: Vec<usize> = Vec::new();
        for (i, key) in keys.iter().enumerate() {
            if found.contains_key(key) || !pending.insert(key) {
                continue;
            }
            match self.cached(key) {
                Some(v) => {
                    found.insert(key, v);
                }
                None => misses.push(i),
            }
        }
        for batch in misses.chunks(self.cfg.batch_size) {
            let inputs: Vec<String> = batch.iter().map(|&i| texts[i].clone()).collect();
            let raw = {
                let _permit = self.limit.acquire();
                self.provider_calls.fetch_add(1, Ordering::Relaxed);
                self.provider.embed_batch(&inputs)?
            };
            if raw.len() != inputs.len() {
                return Err(EmbedError::MalformedResponse(format!(
                    "{} vectors for {} inputs",
                    raw.len(),
                    inputs.len()
                )));
            }
            for (&i, values) in batch.iter().zip(raw) {
                if values.len() != self.cfg.dim {
                    return Err(EmbedError::DimensionMismatch {
                        expected: self.cfg.dim,
                        got: values.len(),
                    });
                }
                let v = EmbeddingVector::new(values)?;
                if let Some(cache) = &self.cache {
                    cache.put(&keys[i], &self.cfg.model_id, &v)?;
                }
                found.insert(&keys[i], v);
            }
        }
        Ok(keys.iter().map(|k| found[k].clone()).collect())
    }

    fn cached(&self, key: &CacheKey) -> Option<EmbeddingVector> {
        let cache = self.cache.as_ref()?;
        match cache.get(key) {
            Ok(Some(v)) if v.dim() == self.cfg.dim => Some(v),
            Ok(_) => None,
            Err(e) => {
                log::warn!("{e}; re-embedding");
                None
            }
        }
    }
}
