use std::path::PathBuf;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Provenance of one command invocation. Timestamps live only here, so every
/// other output is byte-identical across reruns.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub artifact_version: &'static str,
    pub command: &'static str,
    pub config_path: PathBuf,
    /// SHA-256 of the effective config serialized with sorted keys.
    pub config_hash: String,
    pub seed: u64,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<PathBuf>,
}

pub fn unix_now() -> f64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs_f64())
        .unwrap_or(0.0)
}

/// Hash of `value` serialized as compact JSON with object keys sorted.
pub fn config_hash<T: Serialize>(value: &T) -> serde_json::Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap, so going through it
    // sorts them.
    let canonical = serde_json::to_string(&serde_json::to_value(value)?)?;
    let digest = Sha256::digest(canonical.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
