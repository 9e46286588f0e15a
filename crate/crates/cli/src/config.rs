//! Run configuration file.
//!
//! One TOML or JSON document (chosen by extension, `.json` is JSON and
//! anything else TOML). Relative paths inside it resolve against the
//! directory holding the file. Command-line flags override file values,
//! which override built-in defaults.

use std::collections::BTreeMap;
use std::path::{Component, Path, PathBuf};

use anyhow::{bail, Context, Result};
use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use stancemine_core::gateway::FailurePolicy;
use stancemine_core::stance::{Orientation, StanceMethod};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendEntry {
    pub kind: BackendKind,
    #[serde(default)]
    pub endpoint: Option<String>,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default)]
    pub max_output_tokens: Option<u32>,
    #[serde(default)]
    pub api_key_env: Option<String>,
    #[serde(default)]
    pub timeout_ms: Option<u64>,
    #[serde(default)]
    pub max_attempts: Option<u32>,
    #[serde(default)]
    pub base_backoff_ms: Option<u64>,
    #[serde(default)]
    pub reproducible: Option<bool>,
    /// Reply table for `kind = "scripted"`.
    #[serde(default)]
    pub script: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// URL of a listing service, a dump directory, or a posts file.
    pub source: Option<String>,
    pub flairs: Vec<String>,
    pub from: Option<NaiveDate>,
    pub to: Option<NaiveDate>,
    pub bot_blocklist: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClaimsSection {
    pub strategy: Option<String>,
    pub exemplars: Option<PathBuf>,
    pub exemplar_count: Option<usize>,
    pub exclude_exemplar_titles: Option<bool>,
    /// Reviewer notes per post (`has_claim`, `claim_text`, `claim_type`).
    pub annotations: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StanceSection {
    pub methods: Vec<StanceMethod>,
    pub fewshot_exemplars: Option<PathBuf>,
    pub cot_exemplars: Option<PathBuf>,
    pub nli_endpoint: Option<String>,
    pub embed_endpoint: Option<String>,
    pub sts_threshold: Option<f64>,
    pub orientation: Option<Orientation>,
    pub endpoint_timeout_ms: Option<u64>,
    /// `{pair_id, gold_stance}` records attached when pairs are built.
    pub gold: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub failure_policy: Option<FailurePolicy>,
    /// Largest tolerated share of unparseable replies, in [0, 1].
    pub parse_failure_budget: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub sample_size: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub backend: Option<String>,
    pub backends: BTreeMap<String, BackendEntry>,
    pub cache: Option<PathBuf>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub parallelism: Option<usize>,
    pub max_in_flight: Option<usize>,
    pub checkpoint_every: Option<usize>,
    /// Pins manifest timestamps; `SOURCE_DATE_EPOCH` takes precedence.
    pub manifest_timestamp: Option<DateTime<Utc>>,
    pub ingest: IngestSection,
    pub claims: ClaimsSection,
    pub stance: StanceSection,
    pub eval: EvalSection,
    pub run: RunSection,
    #[serde(skip)]
    base: PathBuf,
}

pub const DEFAULT_PARSE_FAILURE_BUDGET: f64 = 0.05;
pub const DEFAULT_SAMPLE_SIZE: usize = 400;

impl Config {
    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Config = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        cfg.base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<()> {
        if let Some(b) = self.eval.parse_failure_budget {
            if !(0.0..=1.0).contains(&b) {
                bail!("eval.parse_failure_budget {b} outside [0, 1]");
            }
        }
        if let Some(name) = &self.backend {
            if !self.backends.contains_key(name) {
                bail!("default backend {name:?} is not defined under [backends]");
            }
        }
        for (name, b) in &self.backends {
            match b.kind {
                BackendKind::Scripted if b.script.is_none() => bail!("backend {name:?}: scripted backends need `script`"),
                BackendKind::Http if b.endpoint.is_none() => bail!("backend {name:?}: http backends need `endpoint`"),
                _ => {}
            }
        }
        Ok(())
    }

    /// Resolves a path written in the config file.
    pub fn resolve(&self, path: &Path) -> PathBuf {
        let joined = if path.is_absolute() { path.to_path_buf() } else { self.base.join(path) };
        // Drops `.` segments so `source = "."` names files cleanly.
        let clean: PathBuf = joined.components().filter(|c| !matches!(c, Component::CurDir)).collect();
        if clean.as_os_str().is_empty() {
            PathBuf::from(".")
        } else {
            clean
        }
    }

    /// Same as [`Config::resolve`] for a source descriptor that may be a URL.
    pub fn resolve_source(&self, source: &str) -> String {
        if source.starts_with("http://") || source.starts_with("https://") {
            source.to_string()
        } else {
            self.resolve(Path::new(source)).display().to_string()
        }
    }

    pub fn failure_policy(&self) -> FailurePolicy {
        self.eval.failure_policy.unwrap_or_default()
    }

    pub fn parse_failure_budget(&self) -> f64 {
        self.eval.parse_failure_budget.unwrap_or(DEFAULT_PARSE_FAILURE_BUDGET)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_paths_resolve_against_the_config_dir() {
        let cfg = Config { base: PathBuf::from("fixtures/synthetic"), ..Default::default() };
        assert_eq!(cfg.resolve(Path::new(".")), PathBuf::from("fixtures/synthetic"));
        assert_eq!(cfg.resolve(Path::new("../x.jsonl")), PathBuf::from("fixtures/synthetic/../x.jsonl"));
        assert_eq!(cfg.resolve(Path::new("/abs")), PathBuf::from("/abs"));
        assert_eq!(Config::default().resolve(Path::new(".")), PathBuf::from("."));
        assert_eq!(cfg.resolve_source("https://h/api"), "https://h/api");
    }

    #[test]
    fn rejects_unknown_keys_and_bad_budgets() {
        assert!(toml::from_str::<Config>("bogus = 1").is_err());
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        std::fs::write(&path, "[eval]\nparse_failure_budget = 1.5\n").unwrap();
        assert!(Config::load(&path).is_err());
        std::fs::write(&path, "backend = \"x\"\n").unwrap();
        assert!(Config::load(&path).is_err());
        let json = dir.path().join("c.json");
        std::fs::write(&json, r#"{"seed": 7, "backends": {"s": {"kind": "scripted", "model_id": "m", "script": "s.json"}}}"#).unwrap();
        let cfg = Config::load(&json).unwrap();
        assert_eq!(cfg.seed, Some(7));
        assert_eq!(cfg.resolve(Path::new("s.json")), dir.path().join("s.json"));
    }
}
