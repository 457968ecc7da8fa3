//! Sidecar files recording which configuration produced an artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub stage: String,
    /// SHA-256 over the stage name, its configuration and upstream hashes.
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
}

pub fn sidecar(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".prov.json");
    artifact.with_file_name(name)
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn config_hash<S: Serialize>(stage: &str, inputs: &S) -> CliResult<String> {
    let mut h = Sha256::new();
    h.update(stage.as_bytes());
    h.update([0u8]);
    h.update(serde_json::to_vec(inputs)?);
    Ok(format!("{:x}", h.finalize()))
}

pub fn write(artifact: &Path, stage: &str, config_hash: &str, seed: u64) -> CliResult<()> {
    let prov = Provenance {
        stage: stage.to_string(),
        config_hash: config_hash.to_string(),
        seed,
        version: env!("CARGO_PKG_VERSION").to_string(),
    };
    std::fs::write(sidecar(artifact), serde_json::to_string_pretty(&prov)? + "\n")?;
    Ok(())
}

pub fn read(artifact: &Path) -> Option<Provenance> {
    let text = std::fs::read_to_string(sidecar(artifact)).ok()?;
    serde_json::from_str(&text).ok()
}

/// Hash recorded for an upstream artifact; a missing artifact names the
/// stage that produces it.
pub fn upstream(artifact: &Path, stage: &str) -> CliResult<String> {
    if !artifact.exists() {
        return Err(CliError::missing(artifact, stage));
    }
    read(artifact).map(|p| p.config_hash).ok_or_else(|| CliError::missing(&sidecar(artifact), stage))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Freshness {
    Absent,
    Current,
    /// Present but produced under a different configuration.
    Stale { recorded: String },
}

pub fn freshness(artifact: &Path, config_hash: &str) -> Freshness {
    if !artifact.exists() {
        return Freshness::Absent;
    }
    match read(artifact) {
        Some(p) if p.config_hash == config_hash => Freshness::Current,
        Some(p) => Freshness::Stale { recorded: p.config_hash },
        None => Freshness::Absent,
    }
}

/// Whether a stage may skip recomputing `artifact`. Stale artifacts are kept
/// with a warning; `force` always recomputes.
pub fn skip(artifact: &Path, config_hash: &str, force: bool) -> bool {
    if force {
        return false;
    }
    match freshness(artifact, config_hash) {
        Freshness::Absent => false,
        Freshness::Current => {
            log::info!("{} is up to date", artifact.display());
            true
        }
        Freshness::Stale { recorded } => {
            log::warn!(
                "stale artifact {}: recorded config hash {} differs from {}; rerun with --force to rebuild",
                artifact.display(),
                &recorded[..12.min(recorded.len())],
                &config_hash[..12.min(config_hash.len())]
            );
            true
        }
    }
}
