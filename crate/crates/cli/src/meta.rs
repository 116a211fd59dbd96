use std::fs;
use std::path::Path;
use std::process::Command;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

/// Version of the CSV layouts written by this binary.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Serialize)]
pub struct RunMetadata<'a, C: Serialize> {
    pub schema_version: u32,
    pub command: &'a str,
    pub seed: u64,
    pub git_revision: String,
    pub config_hash: String,
    pub config: &'a C,
}

pub fn git_revision() -> String {
    Command::new("git")
        .args(["-C", env!("CARGO_MANIFEST_DIR"), "rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

/// SHA-256 of the compact JSON form of `config`.
pub fn config_hash(config: &impl Serialize) -> Result<String> {
    let bytes = serde_json::to_vec(config)?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

/// Logs the run identity to stderr and writes `run.json` into `dir`.
pub fn record<C: Serialize>(dir: &Path, command: &str, seed: u64, config: &C) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let meta = RunMetadata { schema_version: SCHEMA_VERSION, command, seed, git_revision: git_revision(), config_hash: config_hash(config)?, config };
    eprintln!("{command}: seed {seed}, git {}, config {}", meta.git_revision, meta.config_hash);
    let path = dir.join("run.json");
    fs::write(&path, serde_json::to_string_pretty(&meta)?).with_context(|| format!("writing {}", path.display()))
}
