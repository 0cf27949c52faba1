//! Scenario files: a versioned TOML document describing houses, season,
//! horizon, training length and tunables, plus a stable digest that report
//! headers carry so results can be traced back to an exact configuration.

use crate::domain::{DomainError, ScenarioConfig};
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

/// Current scenario-file schema. Readers reject anything else.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("scenario file has schema_version {found}, this build supports {supported}")]
    UnsupportedSchema { found: u32, supported: u32 },
    #[error(transparent)]
    Domain(#[from] DomainError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct ScenarioFile {
    schema_version: u32,
    scenario: ScenarioConfig,
}

/// The scenario rendered as its canonical TOML document — the byte-exact
/// text `save_scenario` writes and the digest is computed over.
pub fn canonical_toml(config: &ScenarioConfig) -> String {
    let file = ScenarioFile { schema_version: SCHEMA_VERSION, scenario: config.clone() };
    toml::to_string_pretty(&file).expect("scenario configs contain no unserializable values")
}

pub fn save_scenario(path: &Path, config: &ScenarioConfig) -> Result<(), ConfigError> {
    config.validate()?;
    std::fs::write(path, canonical_toml(config))
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })
}

pub fn load_scenario(path: &Path) -> Result<ScenarioConfig, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
    let file: ScenarioFile = toml::from_str(&text)
        .map_err(|e| ConfigError::Parse { path: path.display().to_string(), message: e.to_string() })?;
    if file.schema_version != SCHEMA_VERSION {
        return Err(ConfigError::UnsupportedSchema { found: file.schema_version, supported: SCHEMA_VERSION });
    }
    file.scenario.validate()?;
    Ok(file.scenario)
}

/// FNV-1a 64-bit over the canonical TOML, as 16 hex digits. Identical
/// configurations yield identical digests on every platform.
pub fn config_digest(config: &ScenarioConfig) -> String {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in canonical_toml(config).bytes() {
        hash ^= u64::from(byte);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{hash:016x}")
}
