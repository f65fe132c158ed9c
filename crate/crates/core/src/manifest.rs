//! Provenance stamped into every artifact a run writes.
//!
//! Only inputs that determine the output go in the manifest, so repeated
//! runs produce byte-identical files. Timestamps and wall time live in a
//! `.timing.json` sidecar next to the artifact.

use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::Dataset;

pub const ENGINE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub engine_version: String,
    pub config_hash: String,
    pub corpus_hash: String,
    pub index_model_id: Option<String>,
}

impl RunManifest {
    pub fn new(config_hash: String, corpus_hash: String, index_model_id: Option<String>) -> Self {
        RunManifest {
            engine_version: ENGINE_VERSION.to_string(),
            config_hash,
            corpus_hash,
            index_model_id,
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of the canonical JSON form of any serializable value.
pub fn json_hash<T: Serialize>(value: &T) -> String {
    sha256_hex(&serde_json::to_vec(value).expect("serializable"))
}

/// Hash over the normalized form of the corpus, independent of the layout
/// it was loaded from.
pub fn corpus_hash(ds: &Dataset) -> String {
    json_hash(&ds.to_normalized())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub started_unix_ms: u64,
    pub finished_unix_ms: u64,
    pub wall_ms: u64,
}

impl Timing {
    pub fn ending_now(wall: Duration) -> Self {
        let now = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .unwrap_or_default()
            .as_millis() as u64;
        let wall_ms = wall.as_millis() as u64;
        Timing {
            started_unix_ms: now.saturating_sub(wall_ms),
            finished_unix_ms: now,
            wall_ms,
        }
    }
}

pub fn timing_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".timing.json");
    artifact.with_file_name(name)
}

pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sidecar_names() {
        assert_eq!(timing_path(Path::new("out/a.json")), Path::new("out/a.json.timing.json"));
        assert_eq!(manifest_path(Path::new("idx.tqvi")), Path::new("idx.tqvi.manifest.json"));
    }

    #[test]
    fn hashes_are_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(json_hash(&vec![1, 2]), sha256_hex(b"[1,2]"));
    }
}
