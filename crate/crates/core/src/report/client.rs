//! Language-model transport: a provider-neutral trait, an OpenAI-style chat
//! completions client over HTTP, a replaying mock, and retry with backoff.

use std::collections::{HashMap, VecDeque};
use std::sync::Mutex;
use std::time::Duration;

use log::warn;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenerationParams {
    pub temperature: f64,
    pub max_tokens: u32,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams { temperature: 0.0, max_tokens: 1024 }
    }
}

/// Failure of a single request.
#[derive(Debug, Clone, PartialEq)]
pub struct LlmError {
    pub status: Option<u16>,
    pub retryable: bool,
    pub detail: String,
}

impl LlmError {
    pub fn timeout() -> Self {
        LlmError { status: None, retryable: true, detail: "timed out".into() }
    }

    pub fn status(code: u16, body: &str) -> Self {
        LlmError {
            status: Some(code),
            retryable: code == 429 || code >= 500,
            detail: format!("HTTP {code}: {}", body.chars().take(200).collect::<String>()),
        }
    }
}

impl std::fmt::Display for LlmError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.detail)
    }
}

pub trait LlmClient: Send + Sync {
    /// Identifier recorded in provenance, e.g. the provider model name.
    fn model_id(&self) -> String;

    fn send(&self, prompt: &str, params: &GenerationParams) -> std::result::Result<String, LlmError>;
}

#[derive(Clone, Copy)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub base_delay: Duration,
    /// Injected so tests do not wait.
    pub sleep: fn(Duration),
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { max_attempts: 3, base_delay: Duration::from_millis(500), sleep: std::thread::sleep }
    }
}

impl std::fmt::Debug for RetryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RetryPolicy")
            .field("max_attempts", &self.max_attempts)
            .field("base_delay", &self.base_delay)
            .finish()
    }
}

impl RetryPolicy {
    pub fn no_wait() -> Self {
        RetryPolicy { sleep: |_| {}, ..Default::default() }
    }
}

/// Sends with exponential backoff (`base · 2^attempt`) on retryable errors.
pub fn send_with_retry(
    client: &dyn LlmClient,
    prompt: &str,
    params: &GenerationParams,
    policy: &RetryPolicy,
) -> Result<String> {
    let mut log = Vec::new();
    let attempts = policy.max_attempts.max(1);
    for attempt in 0..attempts {
        match client.send(prompt, params) {
            Ok(text) => return Ok(text),
            Err(e) => {
                warn!("{}: attempt {} failed: {e}", client.model_id(), attempt + 1);
                log.push(format!("attempt {}: {e}", attempt + 1));
                if !e.retryable {
                    return Err(Error::Transport { attempts: (attempt + 1) as usize, detail: log.join("; ") });
                }
                if attempt + 1 < attempts {
                    (policy.sleep)(policy.base_delay * 2u32.pow(attempt));
                }
            }
        }
    }
    Err(Error::Transport { attempts: attempts as usize, detail: log.join("; ") })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    /// Base URL of an OpenAI-compatible API, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_s: u64,
}

fn default_timeout() -> u64 {
    60
}

/// Chat-completions client.
pub struct HttpClient {
    cfg: ProviderConfig,
    key: String,
    agent: ureq::Agent,
}

impl HttpClient {
    /// Fails if the credential variable is unset or empty.
    pub fn new(cfg: ProviderConfig) -> Result<Self> {
        let key = std::env::var(&cfg.api_key_env)
            .ok()
            .filter(|k| !k.is_empty())
            .ok_or_else(|| Error::Config(format!("credential variable `{}` is not set", cfg.api_key_env)))?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(cfg.timeout_s)))
            .http_status_as_error(false)
            .build()
            .into();
        Ok(HttpClient { cfg, key, agent })
    }
}

impl LlmClient for HttpClient {
    fn model_id(&self) -> String {
        self.cfg.model.clone()
    }

    fn send(&self, prompt: &str, params: &GenerationParams) -> std::result::Result<String, LlmError> {
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let body = json!({
            "model": self.cfg.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        });
        let mut resp = self
            .agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => LlmError::timeout(),
                other => LlmError { status: None, retryable: true, detail: other.to_string() },
            })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError { status: Some(status), retryable: true, detail: e.to_string() })?;
        if !(200..300).contains(&status) {
            return Err(LlmError::status(status, &text));
        }
        let v: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| LlmError { status: Some(status), retryable: false, detail: format!("bad JSON: {e}") })?;
        v["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| LlmError {
                status: Some(status),
                retryable: false,
                detail: "response has no choices[0].message.content".into(),
            })
    }
}

/// Deterministic stand-in. Lookup order: scripted queue, exact prompt map,
/// then prompt substring rules, then the default response.
pub struct MockClient {
    id: String,
    exact: HashMap<String, String>,
    contains: Vec<(String, String)>,
    default: Option<String>,
    script: Mutex<VecDeque<std::result::Result<String, LlmError>>>,
    calls: Mutex<Vec<String>>,
}

impl MockClient {
    pub fn new(id: impl Into<String>) -> Self {
        MockClient {
            id: id.into(),
            exact: HashMap::new(),
            contains: Vec::new(),
            default: None,
            script: Mutex::new(VecDeque::new()),
            calls: Mutex::new(Vec::new()),
        }
    }

    pub fn with_response(mut self, prompt: impl Into<String>, response: impl Into<String>) -> Self {
        self.exact.insert(prompt.into(), response.into());
        self
    }

    pub fn when_contains(mut self, needle: impl Into<String>, response: impl Into<String>) -> Self {
        self.contains.push((needle.into(), response.into()));
        self
    }

    pub fn with_default(mut self, response: impl Into<String>) -> Self {
        self.default = Some(response.into());
        self
    }

    /// Queues one-shot results consumed before any other rule.
    pub fn with_script(self, items: Vec<std::result::Result<String, LlmError>>) -> Self {
        self.script.lock().unwrap().extend(items);
        self
    }

    pub fn calls(&self) -> Vec<String> {
        self.calls.lock().unwrap().clone()
    }
}

impl LlmClient for MockClient {
    fn model_id(&self) -> String {
        self.id.clone()
    }

    fn send(&self, prompt: &str, _params: &GenerationParams) -> std::result::Result<String, LlmError> {
        self.calls.lock().unwrap().push(prompt.to_string());
        if let Some(next) = self.script.lock().unwrap().pop_front() {
            return next;
        }
        if let Some(r) = self.exact.get(prompt) {
            return Ok(r.clone());
        }
        if let Some((_, r)) = self.contains.iter().find(|(n, _)| prompt.contains(n.as_str())) {
            return Ok(r.clone());
        }
        self.default.clone().ok_or_else(|| LlmError {
            status: Some(404),
            retryable: false,
            detail: "mock has no response for this prompt".into(),
        })
    }
}


/// Canned responses for a [`MockClient`] read from JSON, used when a
/// provider's `base_url` is `mock:<path>`.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockSpec {
    #[serde(default)]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub default: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    pub contains: String,
    pub response: String,
}

impl MockClient {
    pub fn from_spec(id: impl Into<String>, spec: MockSpec) -> Self {
        let mut m = MockClient::new(id);
        for r in spec.rules {
            m = m.when_contains(r.contains, r.response);
        }
        m.default = spec.default;
        m
    }
}

/// Builds the client a provider entry describes.
pub fn client_from_config(cfg: &ProviderConfig) -> Result<Box<dyn LlmClient>> {
    if let Some(path) = cfg.base_url.strip_prefix("mock:") {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: MockSpec = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("mock spec {path}: {e}")))?;
        return Ok(Box::new(MockClient::from_spec(cfg.model.clone(), spec)));
    }
    Ok(Box::new(HttpClient::new(cfg.clone())?))
}
