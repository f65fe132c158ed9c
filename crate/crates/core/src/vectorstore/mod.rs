//! Exact in-memory vector index over topic embeddings.
//!
//! Similarity is the plain inner product (the default) or cosine. Scores are
//! accumulated in `f64`; results are ordered by descending score with ties
//! going to the smaller topic id, so every search is reproducible.

mod persist;

use std::cmp::Ordering;
use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedder::EmbeddingVector;

pub use persist::{load_index, save_index, FORMAT_VERSION, MAGIC};

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("duplicate topic id {0}")]
    DuplicateId(String),
    #[error("cannot build an index from zero items")]
    Empty,
    #[error("cosine similarity is undefined for a zero vector ({0})")]
    ZeroVector(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("index i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("index format version {found} is newer than supported version {supported}")]
    FormatVersion { found: u32, supported: u32 },
    #[error("index checksum mismatch (file corrupted or not an index)")]
    Checksum,
    #[error("malformed index file: {0}")]
    Malformed(String),
}

pub type Result<T, E = StoreError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Dot,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dot" => Ok(Metric::Dot),
            "cosine" => Ok(Metric::Cosine),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// Inner product, accumulated in double precision.
pub fn dot(q: &EmbeddingVector, t: &EmbeddingVector) -> Result<f64> {
    if q.dim() != t.dim() {
        return Err(StoreError::DimensionMismatch {
            expected: q.dim(),
            got: t.dim(),
        });
    }
    Ok(dot_unchecked(q.values(), t.values()))
}

#[inline]
fn dot_unchecked(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn cosine(q: &EmbeddingVector, t: &EmbeddingVector) -> Result<f64> {
    let d = dot(q, t)?;
    let (nq, nt) = (q.norm(), t.norm());
    if nq == 0.0 {
        return Err(StoreError::ZeroVector("query".into()));
    }
    if nt == 0.0 {
        return Err(StoreError::ZeroVector("target".into()));
    }
    Ok(d / (nq * nt))
}

#[derive(Debug, Clone, PartialEq)]
pub struct IndexEntry {
    pub topic_id: String,
    pub lesson_id: String,
    pub vector: EmbeddingVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchHit {
    pub topic_id: String,
    pub lesson_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

/// Immutable index. Entries are sorted by topic id.
#[derive(Debug, Clone)]
pub struct VectorIndex {
    dim: usize,
    model_id: String,
    entries: Vec<IndexEntry>,
    norms: Vec<f64>,
}

impl PartialEq for VectorIndex {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.model_id == other.model_id && self.entries == other.entries
    }
}

impl VectorIndex {
    pub fn build(items: Vec<IndexEntry>, model_id: impl Into<String>) -> Result<Self> {
        let first = items.first().ok_or(StoreError::Empty)?;
        let dim = first.vector.dim();
        let mut seen = HashSet::with_capacity(items.len());
        for item in &items {
            if item.vector.dim() != dim {
                return Err(StoreError::DimensionMismatch {
                    expected: dim,
                    got: item.vector.dim(),
                });
            }
            if !seen.insert(item.topic_id.as_str()) {
                return Err(StoreError::DuplicateId(item.topic_id.clone()));
            }
        }
        let mut entries = items;
        entries.sort_by(|a, b| a.topic_id.cmp(&b.topic_id));
        let norms = entries.iter().map(|e| e.vector.norm()).collect();
        Ok(VectorIndex {
            dim,
            model_id: model_id.into(),
            entries,
            norms,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn model_id(&self) -> &str {
        &self.model_id
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn scores(&self, query: &EmbeddingVector, metric: Metric) -> Result<Vec<f64>> {
        if query.dim() != self.dim {
            return Err(StoreError::DimensionMismatch {
                expected: self.dim,
                got: query.dim(),
            });
        }
        let q = query.values();
        match metric {
            Metric::Dot => Ok(self
                .entries
                .iter()
                .map(|e| dot_unchecked(q, e.vector.values()))
                .collect()),
            Metric::Cosine => {
                let qn = query.norm();
                if qn == 0.0 {
                    return Err(StoreError::ZeroVector("query".into()));
                }
                self.entries
                    .iter()
                    .zip(&self.norms)
                    .map(|(e, &n)| {
                        if n == 0.0 {
                            Err(StoreError::ZeroVector(e.topic_id.clone()))
                        } else {
                            Ok(dot_unchecked(q, e.vector.values()) / (qn * n))
                        }
                    })
                    .collect()
            }
        }
    }

    /// The `k` best entries by full scan (all entries when `k` exceeds the
    /// index size).
    pub fn search(&self, query: &EmbeddingVector, k: usize, metric: Metric) -> Result<Vec<SearchHit>> {
        if k == 0 {
            return Err(StoreError::InvalidArgument("k must be at least 1".into()));
        }
        let scores = self.scores(query, metric)?;
        let mut order: Vec<usize> = (0..self.entries.len()).collect();
        // Entries are sorted by topic id, so comparing positions breaks ties
        // by ascending id.
        let cmp = |a: &usize, b: &usize| -> Ordering { scores[*b].total_cmp(&scores[*a]).then(a.cmp(b)) };
        let k = k.min(order.len());
        if k < order.len() {
            order.select_nth_unstable_by(k - 1, cmp);
            order.truncate(k);
        }
        order.sort_unstable_by(cmp);
        Ok(order
            .into_iter()
            .enumerate()
            .map(|(r, i)| SearchHit {
                topic_id: self.entries[i].topic_id.clone(),
                lesson_id: self.entries[i].lesson_id.clone(),
                score: scores[i],
                rank: r + 1,
            })
            .collect())
    }
}

/// Convenience wrapper matching the free-function shape used elsewhere.
pub fn build_index(items: Vec<IndexEntry>, model_id: &str) -> Result<VectorIndex> {
    VectorIndex::build(items, model_id)
}
