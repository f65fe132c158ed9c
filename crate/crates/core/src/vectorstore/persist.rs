//! Binary index file.
//!
//! ```text
//! magic     b"TQVI"
//! version   u32
//! model_id  u32 length + UTF-8
//! dim       u32
//! count     u64
//! entries   count x { topic_id: u32 length + UTF-8,
//!                     lesson_id: u32 length + UTF-8,
//!                     values: dim x f64 }
//! checksum  SHA-256 of every preceding byte
//! ```
//!
//! Integers and floats are little-endian. The checksum is verified before
//! anything else is interpreted.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{IndexEntry, Result, StoreError, VectorIndex};
use crate::embedder::EmbeddingVector;

pub const MAGIC: &[u8; 4] = b"TQVI";
pub const FORMAT_VERSION: u32 = 1;
const CHECKSUM_LEN: usize = 32;

pub fn save_index(index: &VectorIndex, path: &Path) -> Result<()> {
    let bytes = encode(index, FORMAT_VERSION);
    let io = |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).map_err(io)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(&bytes).map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}

pub fn load_index(path: &Path) -> Result<VectorIndex> {
    let bytes = fs::read(path).map_err(|source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode(&bytes)
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

pub(super) fn encode(index: &VectorIndex, version: u32) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&version.to_le_bytes());
    put_str(&mut out, &index.model_id);
    out.extend_from_slice(&(index.dim as u32).to_le_bytes());
    out.extend_from_slice(&(index.entries.len() as u64).to_le_bytes());
    for e in &index.entries {
        put_str(&mut out, &e.topic_id);
        put_str(&mut out, &e.lesson_id);
        for v in e.vector.values() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| StoreError::Malformed(format!("truncated at byte {}", self.pos)))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|e| StoreError::Malformed(e.to_string()))
    }
}

pub(super) fn decode(bytes: &[u8]) -> Result<VectorIndex> {
    if bytes.len() < MAGIC.len() + 4 + CHECKSUM_LEN {
        return Err(StoreError::Checksum);
    }
    let (body, stored) = bytes.split_at(bytes.len() - CHECKSUM_LEN);
    if Sha256::digest(body).as_slice() != stored {
        return Err(StoreError::Checksum);
    }
    let mut c = Cursor { buf: body, pos: 0 };
    if c.take(4)? != MAGIC {
        return Err(StoreError::Malformed("bad magic".into()));
    }
    let version = c.u32()?;
    if version != FORMAT_VERSION {
        return Err(StoreError::FormatVersion {
            found: version,
            supported: FORMAT_VERSION,
        });
    }
    let model_id = c.string()?;
    let dim = c.u32()? as usize;
    let count = c.u64()? as usize;
    let mut entries = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let topic_id = c.string()?;
        let lesson_id = c.string()?;
        let raw = c.take(dim.checked_mul(8).ok_or_else(|| StoreError::Malformed("dim overflow".into()))?)?;
        let values = raw
            .chunks_exact(8)
            .map(|ch| f64::from_le_bytes(ch.try_into().unwrap()))
            .collect();
        let vector = EmbeddingVector::new(values).map_err(|e| StoreError::Malformed(e.to_string()))?;
        entries.push(IndexEntry {
            topic_id,
            lesson_id,
            vector,
        });
    }
    if c.pos != body.len() {
        return Err(StoreError::Malformed("trailing bytes after entries".into()));
    }
    let index = VectorIndex::build(entries, model_id)?;
    if index.dim != dim {
        return Err(StoreError::Malformed("header dim disagrees with entries".into()));
    }
    Ok(index)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorstore::build_index;

    fn sample() -> VectorIndex {
        let e = |id: &str, l: &str, x: &[f64]| IndexEntry {
            topic_id: id.into(),
            lesson_id: l.into(),
            vector: EmbeddingVector::new(x.to_vec()).unwrap(),
        };
        build_index(
            vec![
                e("T_0874", "L_0001", &[0.25, -1.5, 3.0e-7]),
                e("T_1356", "L_0001", &[1.0, 0.0, -0.0]),
                e("T_3629", "L_0732", &[f64::MIN_POSITIVE, 2.0, 0.1]),
            ],
            "text-embedding-ada-002",
        )
        .unwrap()
    }

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("nested/index.tqvi");
        save_index(&sample(), &path).unwrap();
        let back = load_index(&path).unwrap();
        assert_eq!(back, sample());
        assert_eq!(back.model_id(), "text-embedding-ada-002");
        assert_eq!(encode(&back, FORMAT_VERSION), fs::read(&path).unwrap());
    }

    #[test]
    fn flipped_payload_byte_is_checksum_error() {
        let mut bytes = encode(&sample(), FORMAT_VERSION);
        let i = bytes.len() - CHECKSUM_LEN - 5;
        bytes[i] ^= 1;
        assert!(matches!(decode(&bytes), Err(StoreError::Checksum)));
        assert!(matches!(decode(&bytes[..10]), Err(StoreError::Checksum)));
    }

    #[test]
    fn future_version_is_rejected() {
        let bytes = encode(&sample(), FORMAT_VERSION + 1);
        assert!(matches!(
            decode(&bytes),
            Err(StoreError::FormatVersion { found: 2, supported: 1 })
        ));
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(
            load_index(Path::new("/no/such/index")),
            Err(StoreError::Io { .. })
        ));
    }
}
