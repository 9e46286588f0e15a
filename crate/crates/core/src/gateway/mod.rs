//! Chat-model access: prompt construction, a retrying client with a
//! deterministic response cache, and reply parsing.

pub mod cache;
pub mod parse;
pub mod prompt;
pub mod transport;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, ResponseCache};
pub use parse::{parse_claim_response, parse_stance_response, render_stance, FailurePolicy, ParseFailure};
pub use prompt::{
    build_claim_prompt, build_stance_prompt, ClaimExemplar, Exemplars, PromptError, PromptSpec, StanceExemplar,
    Strategy, Task,
};
pub use transport::{ChatRequest, HttpReply, HttpTransport, Script, ScriptedTransport, Transport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_backoff_ms: 500 }
    }
}

impl RetryPolicy {
    /// Exponential: base, 2·base, 4·base, …
    pub fn backoff(&self, failed_attempts: u32) -> Duration {
        let factor = 1u64 << failed_attempts.saturating_sub(1).min(16);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(factor))
    }
}

fn default_max_tokens() -> u32 {
    512
}

fn default_timeout_ms() -> u64 {
    60_000
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    pub name: String,
    pub endpoint: String,
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    /// Environment variable holding the bearer credential, if any.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Reproducibility mode pins temperature to 0.
    #[serde(default = "default_true")]
    pub reproducible: bool,
}

impl BackendConfig {
    pub fn new(name: impl Into<String>, endpoint: impl Into<String>, model_id: impl Into<String>) -> Self {
        BackendConfig {
            name: name.into(),
            endpoint: endpoint.into(),
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: default_max_tokens(),
            retry: RetryPolicy::default(),
            timeout_ms: default_timeout_ms(),
            api_key_env: None,
            reproducible: true,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let bad = |msg: String| Err(GatewayError::Config(format!("backend {:?}: {msg}", self.name)));
        if self.name.is_empty() {
            return bad("empty name".into());
        }
        if !self.temperature.is_finite() || self.temperature < 0.0 {
            return bad(format!("temperature {} must be >= 0", self.temperature));
        }
        if self.reproducible && self.temperature != 0.0 {
            return bad(format!("reproducible mode requires temperature 0, got {}", self.temperature));
        }
        if self.max_output_tokens == 0 {
            return bad("max_output_tokens must be positive".into());
        }
        if self.retry.max_attempts == 0 {
            return bad("retry.max_attempts must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("backend {backend}: failed after {} attempt(s): {}", attempts.len(), attempts.join("; "))]
    Exhausted { backend: String, attempts: Vec<String> },
    #[error("backend {backend}: HTTP {status}: {excerpt}")]
    Status { backend: String, status: u16, excerpt: String },
    #[error("backend {backend}: {message}")]
    BadResponse { backend: String, message: String },
    #[error("response cache: {0}")]
    Cache(#[from] std::io::Error),
}

fn body_excerpt(body: &str) -> String {
    const MAX: usize = 200;
    match body.char_indices().nth(MAX) {
        Some((idx, _)) => format!("{}…", &body[..idx]),
        None => body.to_string(),
    }
}

/// Counting semaphore bounding concurrent backend requests.
struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn acquire(&self) -> InFlightGuard<'_> {
        let mut used = self.used.lock().expect("in-flight lock");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("in-flight lock");
        }
        *used += 1;
        InFlightGuard(self)
    }
}

struct InFlightGuard<'a>(&'a InFlight);

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        *self.0.used.lock().expect("in-flight lock") -= 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatewayStats {
    pub requests: u64,
    pub network_calls: u64,
    pub cache_hits: u64,
}

pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

/// A configured backend plus optional cache. Safe to share across threads.
pub struct Gateway {
    config: BackendConfig,
    transport: Arc<dyn Transport>,
    cache: Option<Arc<ResponseCache>>,
    in_flight: InFlight,
    requests: AtomicU64,
    network_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl Gateway {
    pub fn new(config: BackendConfig, transport: Arc<dyn Transport>) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Gateway {
            config,
            transport,
            cache: None,
            in_flight: InFlight { limit: DEFAULT_MAX_IN_FLIGHT, used: Mutex::new(0), freed: Condvar::new() },
            requests: AtomicU64::new(0),
            network_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        })
    }

    /// Plain HTTP transport honouring the configured timeout.
    pub fn http(config: BackendConfig) -> Result<Self, GatewayError> {
        let transport = Arc::new(HttpTransport::new(Duration::from_millis(config.timeout_ms)));
        Self::new(config, transport)
    }

    pub fn with_cache(mut self, cache: Arc<ResponseCache>) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_max_in_flight(mut self, limit: usize) -> Self {
        self.in_flight.limit = limit.max(1);
        self
    }

    pub fn config(&self) -> &BackendConfig {
        &self.config
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            requests: self.requests.load(Ordering::SeqCst),
            network_calls: self.network_calls.load(Ordering::SeqCst),
            cache_hits: self.cache_hits.load(Ordering::SeqCst),
        }
    }

    pub fn cache_key(&self, prompt: &str) -> String {
        cache_key(&self.config.name, &self.config.model_id, self.config.temperature, prompt)
    }

    /// Cached response if present, otherwise one request with retries on
    /// transport failures, 429 and 5xx.
    pub fn complete(&self, prompt: &str) -> Result<String, GatewayError> {
        self.requests.fetch_add(1, Ordering::SeqCst);
        let key = self.cache.as_ref().map(|_| self.cache_key(prompt));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key) {
                self.cache_hits.fetch_add(1, Ordering::SeqCst);
                return Ok(hit);
            }
        }
        let text = self.call(prompt)?;
        match (&self.cache, &key) {
            (Some(cache), Some(key)) => Ok(cache.put(key, &text)?),
            _ => Ok(text),
        }
    }

    fn call(&self, prompt: &str) -> Result<String, GatewayError> {
        let request = ChatRequest::single_user(&self.config, prompt);
        let backend = self.config.name.clone();
        let mut log = Vec::new();
        for attempt in 1..=self.config.retry.max_attempts {
            if attempt > 1 {
                std::thread::sleep(self.config.retry.backoff(attempt - 1));
            }
            let outcome = {
                let _slot = self.in_flight.acquire();
                self.network_calls.fetch_add(1, Ordering::SeqCst);
                self.transport.send(&self.config, &request)
            };
            match outcome {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    return transport::response_content(&reply.body)
                        .map_err(|message| GatewayError::BadResponse { backend, message });
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    log.push(format!("attempt {attempt}: HTTP {}: {}", reply.status, body_excerpt(&reply.body)));
                }
                Ok(reply) => {
                    return Err(GatewayError::Status { backend, status: reply.status, excerpt: body_excerpt(&reply.body) })
                }
                Err(message) => log.push(format!("attempt {attempt}: {message}")),
            }
        }
        Err(GatewayError::Exhausted { backend, attempts: log })
    }
}
