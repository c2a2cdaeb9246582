//! Report envelope shared by every subcommand.
//!
//! Reports carry the resolved configuration and input checksums so published
//! numbers stay traceable to their inputs. Everything outside the `meta`
//! field is deterministic for fixed inputs and flags; `meta` holds the
//! timestamp and tool version and is excluded from byte-for-byte
//! comparisons.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct Meta {
    pub generated_unix_s: u64,
    pub tool: &'static str,
    pub version: &'static str,
}

#[derive(Serialize)]
pub struct Envelope<'a, T: Serialize> {
    pub schema_version: u32,
    pub meta: Meta,
    pub config: serde_json::Value,
    pub payload: &'a T,
}

pub fn write_report<T: Serialize>(
    path: &Path,
    config: serde_json::Value,
    payload: &T,
) -> Result<()> {
    let envelope = Envelope {
        schema_version: SCHEMA_VERSION,
        meta: Meta {
            generated_unix_s: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            tool: "noisebench",
            version: env!("CARGO_PKG_VERSION"),
        },
        config,
        payload,
    };
    let json = serde_json::to_string_pretty(&envelope)?;
    fs::write(path, json).with_context(|| format!("writing report {}", path.display()))?;
    Ok(())
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        fs::read(path).with_context(|| format!("checksumming {}", path.display()))?;
    let digest = Sha256::digest(&bytes);
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

/// Checksums of the files that define a run's inputs; missing optional files
/// are simply absent from the map.
pub fn checksum_inputs(paths: &[&Path]) -> Result<serde_json::Value> {
    let mut map = BTreeMap::new();
    for path in paths {
        if path.is_file() {
            map.insert(path.display().to_string(), sha256_file(path)?);
        }
    }
    Ok(serde_json::to_value(map)?)
}
