//! Offline hashing embedder.
//!
//! Recipe: lowercase the text, split it on every non-alphanumeric character,
//! hash each token's UTF-8 bytes with 64-bit FNV-1a, add 1.0 to bucket
//! `hash % dim`, then L2-normalize. Text without tokens maps to the first
//! basis vector. The output is identical on every platform.

use super::{EmbeddingProvider, EmbeddingVector, Result};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes
        .iter()
        .fold(FNV_OFFSET, |h, &b| (h ^ b as u64).wrapping_mul(FNV_PRIME))
}

pub fn tokenize(text: &str) -> Vec<String> {
    text.to_lowercase()
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

pub fn deterministic_embed(text: &str, dim: usize) -> EmbeddingVector {
    assert!(dim >= 2, "deterministic embedding needs dim >= 2");
    let mut values = vec![0.0f64; dim];
    let tokens = tokenize(text);
    if tokens.is_empty() {
        values[0] = 1.0;
    } else {
        for t in &tokens {
            values[(fnv1a64(t.as_bytes()) % dim as u64) as usize] += 1.0;
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        values.iter_mut().for_each(|v| *v /= norm);
    }
    EmbeddingVector::new(values).expect("finite by construction")
}

#[derive(Debug, Clone, Copy)]
pub struct DeterministicLocal {
    dim: usize,
}

impl DeterministicLocal {
    pub fn new(dim: usize) -> Self {
        DeterministicLocal { dim }
    }
}

impl EmbeddingProvider for DeterministicLocal {
    fn embed_batch(&self, texts: &[String]) -> Result<Vec<Vec<f64>>> {
        Ok(texts
            .iter()
            .map(|t| deterministic_embed(t, self.dim).into_values())
            .collect())
    }
}
