//! Chat-completion wire format and the transports that carry it.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::BackendConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl ChatRequest {
    pub fn single_user(config: &BackendConfig, prompt: &str) -> Self {
        ChatRequest {
            model: config.model_id.clone(),
            messages: vec![ChatMessage { role: "user".into(), content: prompt.to_string() }],
            temperature: config.temperature,
            max_tokens: config.max_output_tokens,
        }
    }

    pub fn prompt(&self) -> &str {
        self.messages.last().map(|m| m.content.as_str()).unwrap_or_default()
    }
}

#[derive(Debug, Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Debug, Deserialize)]
struct Choice {
    message: ChatMessage,
}

/// Content of the first choice of a chat-completion response body.
pub fn response_content(body: &str) -> Result<String, String> {
    let parsed: ChatResponse = serde_json::from_str(body).map_err(|e| format!("malformed response body: {e}"))?;
    parsed
        .choices
        .into_iter()
        .next()
        .map(|c| c.message.content)
        .ok_or_else(|| "response has no choices".to_string())
}

/// Builds a one-choice chat-completion response body.
pub fn response_body(model: &str, content: &str) -> String {
    serde_json::json!({
        "object": "chat.completion",
        "model": model,
        "choices": [{"index": 0, "message": {"role": "assistant", "content": content}, "finish_reason": "stop"}],
    })
    .to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Moves one request to a backend. `Err` means no HTTP response was obtained.
pub trait Transport: Send + Sync {
    fn send(&self, config: &BackendConfig, request: &ChatRequest) -> Result<HttpReply, String>;
}

pub struct HttpTransport {
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn send(&self, config: &BackendConfig, request: &ChatRequest) -> Result<HttpReply, String> {
        let mut req = self.agent.post(&config.endpoint).header("content-type", "application/json");
        if let Some(var) = &config.api_key_env {
            let key = std::env::var(var).map_err(|_| format!("credential variable {var} is not set"))?;
            req = req.header("authorization", format!("Bearer {key}"));
        }
        let body = serde_json::to_string(request).expect("request serializes");
        let mut response = req.send(body.as_bytes()).map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

/// Replies from a fixed table keyed by the SHA-256 of the prompt text. Used
/// to drive the pipeline deterministically without a model.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    script: Script,
    calls: AtomicUsize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub replies: BTreeMap<String, String>,
    #[serde(default)]
    pub default: Option<String>,
}

impl Script {
    pub fn prompt_key(prompt: &str) -> String {
        hex::encode(Sha256::digest(prompt.as_bytes()))
    }

    pub fn insert(&mut self, prompt: &str, reply: impl Into<String>) {
        self.replies.insert(Self::prompt_key(prompt), reply.into());
    }

    pub fn load(path: &Path) -> std::io::Result<Script> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

impl ScriptedTransport {
    pub fn new(script: Script) -> Self {
        ScriptedTransport { script, calls: AtomicUsize::new(0) }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, config: &BackendConfig, request: &ChatRequest) -> Result<HttpReply, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let key = Script::prompt_key(request.prompt());
        match self.script.replies.get(&key).or(self.script.default.as_ref()) {
            Some(reply) => Ok(HttpReply { status: 200, body: response_body(&config.model_id, reply) }),
            None => Ok(HttpReply { status: 404, body: format!("no scripted reply for prompt {key}") }),
        }
    }
}
