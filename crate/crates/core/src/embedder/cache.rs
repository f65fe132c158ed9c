//! On-disk embedding cache, one file per entry.
//!
//! Entries live at `<root>/<key[..2]>/<key>.emb` where the key is the hex
//! SHA-256 of the model id and the exact embedded text. File layout (all
//! integers little-endian):
//!
//! ```text
//! magic    b"TQEC"
//! version  u32 (1)
//! created  u64 unix seconds
//! model_id u32 length + UTF-8 bytes
//! dim      u32
//! checksum [u8; 32] SHA-256 over key, version, created, model_id, dim, payload
//! payload  dim x f64
//! ```
//!
//! Writes go through a temporary file and an atomic rename, so readers never
//! observe a half-written entry and concurrent writers of one key resolve to
//! whichever rename lands last.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};
use thiserror::Error;

use super::EmbeddingVector;

const MAGIC: &[u8; 4] = b"TQEC";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CacheError {
    #[error("corrupt cache entry {path}: {reason}")]
    Corruption { path: PathBuf, reason: String },
    #[error("cache i/o on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CacheKey(String);

impl CacheKey {
    pub fn new(model_id: &str, text: &str) -> Self {
        let mut h = Sha256::new();
        h.update((model_id.len() as u64).to_le_bytes());
        h.update(model_id.as_bytes());
        h.update(text.as_bytes());
        CacheKey(hex::encode(h.finalize()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingCacheEntry {
    pub key: CacheKey,
    pub model_id: String,
    pub vector: EmbeddingVector,
    pub created_at: u64,
}

#[derive(Debug, Clone)]
pub struct EmbeddingCache {
    root: PathBuf,
}

impl EmbeddingCache {
    pub fn new(root: impl AsRef<Path>) -> Self {
        EmbeddingCache {
            root: root.as_ref().to_path_buf(),
        }
    }

    pub fn path_for(&self, key: &CacheKey) -> PathBuf {
        self.root.join(&key.0[..2]).join(format!("{}.emb", key.0))
    }

    pub fn get(&self, key: &CacheKey) -> Result<Option<EmbeddingVector>, CacheError> {
        Ok(self.get_entry(key)?.map(|e| e.vector))
    }

    pub fn get_entry(&self, key: &CacheKey) -> Result<Option<EmbeddingCacheEntry>, CacheError> {
        let path = self.path_for(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(source) => return Err(CacheError::Io { path, source }),
        };
        decode(key, &bytes)
            .map(Some)
            .map_err(|reason| CacheError::Corruption { path, reason })
    }

    pub fn put(&self, key: &CacheKey, model_id: &str, vector: &EmbeddingVector) -> Result<(), CacheError> {
        let path = self.path_for(key);
        let dir = path.parent().expect("entry has a parent");
        let io = |source| CacheError::Io {
            path: path.clone(),
            source,
        };
        fs::create_dir_all(dir).map_err(io)?;
        let created_at = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        let bytes = encode(key, model_id, vector, created_at);
        let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
        tmp.write_all(&bytes).map_err(io)?;
        tmp.persist(&path).map_err(|e| io(e.error))?;
        Ok(())
    }
}

fn checksum(key: &CacheKey, version: u32, created: u64, model_id: &[u8], dim: u32, payload: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(key.0.as_bytes());
    h.update(version.to_le_bytes());
    h.update(created.to_le_bytes());
    h.update((model_id.len() as u32).to_le_bytes());
    h.update(model_id);
    h.update(dim.to_le_bytes());
    h.update(payload);
    h.finalize().into()
}

fn encode(key: &CacheKey, model_id: &str, vector: &EmbeddingVector, created: u64) -> Vec<u8> {
    let payload: Vec<u8> = vector.values().iter().flat_map(|v| v.to_le_bytes()).collect();
    let dim = vector.dim() as u32;
    let mut out = Vec::with_capacity(64 + model_id.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&created.to_le_bytes());
    out.extend_from_slice(&(model_id.len() as u32).to_le_bytes());
    out.extend_from_slice(model_id.as_bytes());
    out.extend_from_slice(&dim.to_le_bytes());
    out.extend_from_slice(&checksum(key, VERSION, created, model_id.as_bytes(), dim, &payload));
    out.extend_from_slice(&payload);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| format!("truncated at byte {}", self.pos))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

fn decode(key: &CacheKey, bytes: &[u8]) -> Result<EmbeddingCacheEntry, String> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err("bad magic".into());
    }
    let version = r.u32()?;
    let created = r.u64()?;
    let len = r.u32()? as usize;
    let model_id = r.take(len)?;
    let dim = r.u32()?;
    let stored: [u8; 32] = r.take(32)?.try_into().unwrap();
    let payload = r.take(dim as usize * 8)?;
    if r.pos != bytes.len() {
        return Err(format!("{} trailing bytes", bytes.len() - r.pos));
    }
    if checksum(key, version, created, model_id, dim, payload) != stored {
        return Err("checksum mismatch".into());
    }
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(EmbeddingCacheEntry {
        key: key.clone(),
        model_id: String::from_utf8(model_id.to_vec()).map_err(|e| e.to_string())?,
        vector: EmbeddingVector::new(values).map_err(|e| e.to_string())?,
        created_at: created,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vector() -> EmbeddingVector {
        EmbeddingVector::new(vec![0.1, -2.5e-300, 3.0, f64::MIN_POSITIVE, -0.0]).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let key = CacheKey::new("m", "text");
        cache.put(&key, "m", &vector()).unwrap();
        let got = EmbeddingCache::new(dir.path()).get_entry(&key).unwrap().unwrap();
        let bits = |v: &EmbeddingVector| v.values().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&got.vector), bits(&vector()));
        assert_eq!(got.model_id, "m");
    }

    #[test]
    fn absent_key() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        assert!(cache.get(&CacheKey::new("m", "nothing")).unwrap().is_none());
    }

    #[test]
    fn keys_depend_on_model() {
        assert_ne!(CacheKey::new("a", "x"), CacheKey::new("b", "x"));
        // length prefix keeps the (model, text) boundary unambiguous
        assert_ne!(CacheKey::new("ab", "c"), CacheKey::new("a", "bc"));
    }

    #[test]
    fn truncation_is_detected_then_overwritten() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let key = CacheKey::new("m", "t");
        cache.put(&key, "m", &vector()).unwrap();
        let path = cache.path_for(&key);
        let bytes = fs::read(&path).unwrap();
        fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(cache.get(&key), Err(CacheError::Corruption { .. })));
        cache.put(&key, "m", &vector()).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(vector()));
    }

    #[test]
    fn every_single_byte_flip_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        let cache = EmbeddingCache::new(dir.path());
        let key = CacheKey::new("model", "some text");
        cache.put(&key, "model", &vector()).unwrap();
        let path = cache.path_for(&key);
        let clean = fs::read(&path).unwrap();
        for i in 0..clean.len() {
            let mut bad = clean.clone();
            bad[i] ^= 0x40;
            fs::write(&path, &bad).unwrap();
            assert!(
                matches!(cache.get(&key), Err(CacheError::Corruption { .. })),
                "flip at byte {i} went unnoticed"
            );
        }
    }
}
