use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendInfo {
    pub name: String,
    pub model_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config_hash: String,
    /// Path as given → SHA-256 of the file.
    pub inputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendInfo>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    pub timestamp: String,
    /// Path relative to the manifest's directory → SHA-256.
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub counters: BTreeMap<String, u64>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

/// `SOURCE_DATE_EPOCH` first, then the configured pin, then the clock.
pub fn timestamp(pinned: Option<DateTime<Utc>>) -> String {
    let from_env = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::from_timestamp(secs, 0));
    from_env.or(pinned).unwrap_or_else(Utc::now).to_rfc3339_opts(SecondsFormat::Secs, true)
}

pub struct ManifestBuilder {
    manifest: RunManifest,
    outputs: Vec<PathBuf>,
}

impl ManifestBuilder {
    pub fn new(command: &str, config_hash: String, timestamp: String) -> Self {
        ManifestBuilder {
            manifest: RunManifest {
                command: command.to_string(),
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_hash,
                inputs: BTreeMap::new(),
                backend: None,
                strategy: None,
                timestamp,
                outputs: BTreeMap::new(),
                counters: BTreeMap::new(),
            },
            outputs: Vec::new(),
        }
    }

    /// `label` is how the input is named in the manifest, `path` where it is read.
    pub fn input(&mut self, label: impl Into<String>, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.manifest.inputs.insert(label.into(), digest);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn backend(&mut self, info: Option<BackendInfo>) {
        self.manifest.backend = info;
    }

    pub fn strategy(&mut self, strategy: impl Into<String>) {
        self.manifest.strategy = Some(strategy.into());
    }

    pub fn counter(&mut self, name: &str, value: u64) {
        self.manifest.counters.insert(name.to_string(), value);
    }

    /// Digests every registered output as it is on disk now and writes the
    /// manifest to `path`.
    pub fn write(mut self, path: &Path) -> Result<RunManifest> {
        let dir = path.parent().unwrap_or(Path::new(""));
        for out in &self.outputs {
            let key = out.strip_prefix(dir).unwrap_or(out).to_string_lossy().replace('\\', "/");
            self.manifest.outputs.insert(key, file_digest(out)?);
        }
        write_json(path, &self.manifest)?;
        Ok(self.manifest)
    }
}

/// `<out>.manifest.json` next to a single-output command's file.
pub fn sidecar(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}
