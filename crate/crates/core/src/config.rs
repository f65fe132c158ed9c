//! TOML run configuration.
//!
//! ```toml
//! [corpus]
//! path = "data/synthetic-ck12"      # file or directory
//! format = "native-ck12"            # or "normalized"
//!
//! [embedder]                        # optional; deterministic-local-256 by default
//! provider = "deterministic-local"  # or "remote-http"
//! model_id = "deterministic-local-256"
//! dim = 256
//! cache_dir = "cache/embeddings"
//!
//! [index]
//! path = "out/index.tqvi"           # loaded if present, built and saved otherwise
//!
//! [retrieval]
//! top_k = 1
//! metric = "dot"                    # or "cosine"
//! rerank_candidates = 10
//!
//! [rerank_service]
//! kind = "lexical-local"            # or "http" with endpoint, model_id, api_key_env
//!
//! [model]
//! kind = "scripted"                 # "http", "scripted" or "overlap"
//! script = "data/synthetic-ck12/script.json"
//!
//! [budget]
//! max_tokens = 4096
//! reserved_for_answer = 64
//!
//! [eval]
//! name = "RAG (No Re-ranker)"
//! split = "validation"
//! context_mode = "rag-only"
//! concurrency = 4
//! out_dir = "out/eval"
//! ```
//!
//! An ablation matrix file has the same sections, which act as the base
//! for every row, plus either `canonical = true` or one `[[rows]]` table per
//! config (`name`, `context_mode`, optional `rerank`, `split`,
//! `question_limit`, `retrieval` and `model`). Relative paths are resolved
//! against the directory of the file. Credentials are never read from the
//! file, only from the environment variables it names.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{CorpusFormat, Split};
use crate::embedder::{EmbedderConfig, ProviderKind};
use crate::eval::{canonical_matrix, AblationMatrix, EvalConfig};
use crate::generation::{ModelClientConfig, ModelKind};
use crate::promptgen::{ContextMode, TokenBudget};
use crate::retrieval::{RerankServiceConfig, RerankerKind, RetrievalConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {message}")]
    Invalid { path: PathBuf, message: String },
    #[error("--offline forbids {0}")]
    Offline(String),
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusSection {
    pub path: PathBuf,
    #[serde(default = "default_format")]
    pub format: CorpusFormat,
}

fn default_format() -> CorpusFormat {
    CorpusFormat::NativeCk12
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IndexSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default = "default_split")]
    pub split: Split,
    #[serde(default = "default_mode")]
    pub context_mode: ContextMode,
    #[serde(default)]
    pub rerank: bool,
    #[serde(default = "default_concurrency")]
    pub concurrency: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub question_limit: Option<usize>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

fn default_name() -> String {
    "eval".into()
}
fn default_split() -> Split {
    Split::Validation
}
fn default_mode() -> ContextMode {
    ContextMode::NoContext
}
fn default_concurrency() -> usize {
    1
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            name: default_name(),
            split: default_split(),
            context_mode: default_mode(),
            rerank: false,
            concurrency: default_concurrency(),
            seed: 0,
            question_limit: None,
            out_dir: None,
        }
    }
}

pub const DEFAULT_DIM: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: CorpusSection,
    #[serde(default)]
    pub embedder: Option<EmbedderConfig>,
    #[serde(default)]
    pub index: IndexSection,
    #[serde(default)]
    pub retrieval: Option<RetrievalConfig>,
    #[serde(default)]
    pub rerank_service: Option<RerankServiceConfig>,
    #[serde(default)]
    pub model: Option<ModelClientConfig>,
    #[serde(default)]
    pub budget: TokenBudget,
    #[serde(default)]
    pub eval: EvalSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RowSpec {
    pub name: String,
    pub context_mode: ContextMode,
    #[serde(default)]
    pub rerank: bool,
    #[serde(default)]
    pub split: Option<Split>,
    #[serde(default)]
    pub question_limit: Option<usize>,
    #[serde(default)]
    pub retrieval: Option<RetrievalConfig>,
    #[serde(default)]
    pub model: Option<ModelClientConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixConfig {
    pub base: RunConfig,
    pub matrix: AblationMatrix,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn invalid(path: &Path, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

fn resolve(base: &Path, p: &mut PathBuf) {
    if p.is_relative() {
        *p = base.join(&*p);
    }
}

fn model_paths(base: &Path, m: &mut ModelClientConfig) {
    if let Some(p) = m.script.as_mut() {
        resolve(base, p);
    }
    if let Some(p) = m.audit_log.as_mut() {
        resolve(base, p);
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    /// Parses `text` as if read from `path` (used to resolve relative paths).
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| invalid(path, e.to_string()))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new("")));
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        resolve(base, &mut self.corpus.path);
        if let Some(dir) = self.embedder.as_mut().and_then(|e| e.cache_dir.as_mut()) {
            resolve(base, dir);
        }
        if let Some(p) = self.index.path.as_mut() {
            resolve(base, p);
        }
        if let Some(m) = self.model.as_mut() {
            model_paths(base, m);
        }
        if let Some(p) = self.eval.out_dir.as_mut() {
            resolve(base, p);
        }
    }

    pub fn embedder_config(&self) -> EmbedderConfig {
        self.embedder
            .clone()
            .unwrap_or_else(|| EmbedderConfig::deterministic(DEFAULT_DIM))
    }

    pub fn rerank_config(&self) -> RerankServiceConfig {
        self.rerank_service.clone().unwrap_or_default()
    }

    pub fn model_config(&self) -> ModelClientConfig {
        self.model.clone().unwrap_or_else(ModelClientConfig::overlap)
    }

    pub fn eval_config(&self) -> EvalConfig {
        let e = &self.eval;
        EvalConfig {
            name: e.name.clone(),
            split: e.split,
            context_mode: e.context_mode,
            retrieval: self
                .retrieval
                .clone()
                .or_else(|| e.context_mode.needs_retrieval().then(RetrievalConfig::default)),
            rerank: e.rerank,
            model: self.model_config(),
            budget: self.budget,
            concurrency: e.concurrency,
            seed: e.seed,
            question_limit: e.question_limit,
        }
    }

    /// Fails unless every provider this config could touch is local.
    pub fn check_offline(&self, uses_retrieval: bool, uses_rerank: bool, uses_model: bool) -> Result<()> {
        if uses_retrieval && self.embedder_config().provider == ProviderKind::RemoteHttp {
            return Err(ConfigError::Offline("the remote-http embedder".into()));
        }
        if uses_rerank && self.rerank_config().kind == RerankerKind::Http {
            return Err(ConfigError::Offline("the http rerank service".into()));
        }
        if uses_model && self.model_config().kind == ModelKind::Http {
            return Err(ConfigError::Offline("the http model endpoint".into()));
        }
        Ok(())
    }
}

impl MatrixConfig {
    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| invalid(path, e.to_string()))?;
        let canonical = match table.remove("canonical") {
            None => false,
            Some(toml::Value::Boolean(b)) => b,
            Some(_) => return Err(invalid(path, "`canonical` must be true or false")),
        };
        let rows: Vec<RowSpec> = match table.remove("rows") {
            None => Vec::new(),
            Some(v) => v.try_into().map_err(|e: toml::de::Error| invalid(path, e.to_string()))?,
        };
        if table.is_empty() {
            return Err(invalid(path, "matrix file is empty"));
        }
        let base = RunConfig::parse(&toml::to_string(&table).expect("table serializes"), path)?;
        let dir = path.parent().unwrap_or(Path::new(""));
        let base_eval = base.eval_config();
        let mut configs = Vec::new();
        if canonical {
            configs.extend(canonical_matrix(&base_eval).configs);
        }
        for row in rows {
            let mut c = base_eval.clone();
            c.name = row.name;
            c.context_mode = row.context_mode;
            c.rerank = row.rerank;
            if let Some(s) = row.split {
                c.split = s;
            }
            if row.question_limit.is_some() {
                c.question_limit = row.question_limit;
            }
            if row.retrieval.is_some() {
                c.retrieval = row.retrieval;
            }
            if c.retrieval.is_none() && c.context_mode.needs_retrieval() {
                c.retrieval = Some(RetrievalConfig::default());
            }
            if let Some(mut m) = row.model {
                model_paths(dir, &mut m);
                c.model = m;
            }
            configs.push(c);
        }
        if configs.is_empty() {
            return Err(invalid(path, "matrix has no rows; add [[rows]] tables or `canonical = true`"));
        }
        let matrix = AblationMatrix { configs };
        matrix.validate().map_err(|e| invalid(path, e.to_string()))?;
        Ok(MatrixConfig { base, matrix })
    }

    pub fn uses_retrieval(&self) -> bool {
        self.matrix.configs.iter().any(|c| c.context_mode.needs_retrieval())
    }

    pub fn uses_rerank(&self) -> bool {
        self.matrix.configs.iter().any(|c| c.rerank)
    }
}
