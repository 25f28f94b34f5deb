//! Reproducibility manifest and atomic artifact writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Result;

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

/// Writes through a temporary sibling and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".partial");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub package: String,
    pub version: String,
    pub experiment: String,
    pub mode: String,
    pub config_sha256: String,
    pub seed: Option<u64>,
    /// Output file name to its sha256.
    pub files: BTreeMap<String, String>,
    pub config: serde_json::Value,
}

impl Manifest {
    pub fn new(experiment: &str, mode: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        let canonical = serde_json::to_vec(&config).expect("JSON value always serializes");
        Manifest {
            package: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            experiment: experiment.to_string(),
            mode: mode.to_string(),
            config_sha256: sha256_hex(&canonical),
            seed,
            files: BTreeMap::new(),
            config,
        }
    }
}
