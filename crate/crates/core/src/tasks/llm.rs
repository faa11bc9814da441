//! Chat-completion HTTP client for live agent backends.
//!
//! Speaks the common chat-completions wire shape: POST a JSON body with
//! `model`, `messages`, and `temperature`; read the first choice's message
//! and the provider-reported usage. Transient transport failures and
//! rate-limit responses are retried with exponential backoff. The API
//! credential is read from an environment variable at construction and is
//! never written to disk.

use crate::exec::{AgentBackend, BackendError, BackendRequest, BackendResponse};
use serde::{Deserialize, Serialize};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("user content must be nonempty")]
    EmptyContent,
    #[error("credential error: {0}")]
    Credential(String),
    #[error("transport error after {attempts} attempts: {last}")]
    Transport { attempts: u32, last: String },
    #[error("server rejected the request: HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("malformed response: {0}")]
    Protocol(String),
}

/// Backend endpoint configuration. The credential itself stays in the
/// environment; only the variable name is configured.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LlmConfig {
    /// Full URL of the chat-completions endpoint.
    pub endpoint: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    /// Name of the environment variable holding the API key; empty means
    /// no Authorization header (local endpoints).
    #[serde(default)]
    pub api_key_env: String,
    #[serde(default = "default_max_attempts")]
    pub max_attempts: u32,
    #[serde(default = "default_retry_base_ms")]
    pub retry_base_ms: u64,
    /// Upper bound on concurrent in-flight requests.
    #[serde(default = "default_max_concurrency")]
    pub max_concurrency: usize,
}

fn default_timeout_secs() -> u64 {
    60
}

fn default_max_attempts() -> u32 {
    3
}

fn default_retry_base_ms() -> u64 {
    1000
}

fn default_max_concurrency() -> usize {
    4
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReplyMessage,
}

#[derive(Deserialize)]
struct WireReplyMessage {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: Option<u64>,
    completion_tokens: Option<u64>,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

/// Reply from a single chat call.
#[derive(Debug, Clone)]
pub struct ChatOutcome {
    pub text: String,
    pub prompt_tokens: Option<u64>,
    pub completion_tokens: Option<u64>,
}

/// Blocking chat-completion client. Cheap to share across threads; the
/// in-flight concurrency cap is enforced with a semaphore.
pub struct LlmClient {
    config: LlmConfig,
    api_key: Option<String>,
    http: reqwest::blocking::Client,
    permits: std::sync::Mutex<usize>,
    available: std::sync::Condvar,
}

impl LlmClient {
    pub fn new(config: LlmConfig) -> Result<Self, LlmError> {
        let api_key = if config.api_key_env.is_empty() {
            None
        } else {
            Some(std::env::var(&config.api_key_env).map_err(|_| {
                LlmError::Credential(format!(
                    "environment variable {} is not set",
                    config.api_key_env
                ))
            })?)
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| LlmError::Transport {
                attempts: 0,
                last: e.to_string(),
            })?;
        let max_concurrency = config.max_concurrency.max(1);
        Ok(Self {
            config,
            api_key,
            http,
            permits: std::sync::Mutex::new(max_concurrency),
            available: std::sync::Condvar::new(),
        })
    }

    /// One single-turn chat completion. Retries transport failures and
    /// HTTP 429/503 with exponential backoff (base delay doubling per
    /// attempt) up to `max_attempts` total attempts.
    pub fn chat(&self, system_prompt: &str, user_content: &str) -> Result<ChatOutcome, LlmError> {
        if user_content.is_empty() {
            return Err(LlmError::EmptyContent);
        }
        let _permit = self.acquire_permit();
        let body = WireRequest {
            model: &self.config.model,
            messages: vec![
                WireMessage {
                    role: "system",
                    content: system_prompt,
                },
                WireMessage {
                    role: "user",
                    content: user_content,
                },
            ],
            temperature: self.config.temperature,
        };
        let attempts = self.config.max_attempts.max(1);
        let mut last_failure = String::new();
        for attempt in 0..attempts {
            if attempt > 0 {
                let delay = self.config.retry_base_ms.saturating_mul(1 << (attempt - 1));
                std::thread::sleep(Duration::from_millis(delay));
            }
            let mut request = self.http.post(&self.config.endpoint).json(&body);
            if let Some(key) = &self.api_key {
                request = request.bearer_auth(key);
            }
            match request.send() {
                Ok(response) => {
                    let status = response.status();
                    if status.as_u16() == 429 || status.as_u16() == 503 {
                        last_failure = format!("HTTP {status}");
                        continue;
                    }
                    if status.as_u16() == 401 || status.as_u16() == 403 {
                        return Err(LlmError::Credential(format!(
                            "server returned HTTP {status}"
                        )));
                    }
                    let text = response.text().map_err(|e| LlmError::Transport {
                        attempts: attempt + 1,
                        last: e.to_string(),
                    })?;
                    if !status.is_success() {
                        return Err(LlmError::Http {
                            status: status.as_u16(),
                            body: truncate(&text, 500),
                        });
                    }
                    return parse_reply(&text);
                }
                Err(e) => {
                    last_failure = e.to_string();
                    continue;
                }
            }
        }
        Err(LlmError::Transport {
            attempts,
            last: last_failure,
        })
    }

    fn acquire_permit(&self) -> PermitGuard<'_> {
        let mut permits = self.permits.lock().expect("permit lock poisoned");
        while *permits == 0 {
            permits = self.available.wait(permits).expect("permit lock poisoned");
        }
        *permits -= 1;
        PermitGuard { client: self }
    }
}

struct PermitGuard<'a> {
    client: &'a LlmClient,
}

impl Drop for PermitGuard<'_> {
    fn drop(&mut self) {
        let mut permits = self.client.permits.lock().expect("permit lock poisoned");
        *permits += 1;
        self.client.available.notify_one();
    }
}

fn parse_reply(text: &str) -> Result<ChatOutcome, LlmError> {
    let parsed: WireResponse = serde_json::from_str(text)
        .map_err(|e| LlmError::Protocol(format!("{e}; body: {}", truncate(text, 200))))?;
    let choice = parsed
        .choices
        .into_iter()
        .next()
        .ok_or_else(|| LlmError::Protocol("response has no choices".into()))?;
    let content = choice
        .message
        .content
        .ok_or_else(|| LlmError::Protocol("choice has no message content".into()))?;
    let (prompt_tokens, completion_tokens) = match parsed.usage {
        Some(u) => (u.prompt_tokens, u.completion_tokens),
        None => (None, None),
    };
    Ok(ChatOutcome {
        text: content,
        prompt_tokens,
        completion_tokens,
    })
}

fn truncate(text: &str, max: usize) -> String {
    if text.len() <= max {
        text.to_string()
    } else {
        let mut cut = max;
        while !text.is_char_boundary(cut) {
            cut -= 1;
        }
        format!("{}...", &text[..cut])
    }
}

impl AgentBackend for LlmClient {
    fn respond(&self, request: &BackendRequest<'_>) -> Result<BackendResponse, BackendError> {
        let outcome = self
            .chat(request.system_prompt, request.user_content)
            .map_err(|e| match e {
                LlmError::EmptyContent => BackendError::InvalidRequest(e.to_string()),
                LlmError::Credential(_) => BackendError::Credential(e.to_string()),
                LlmError::Protocol(_) => BackendError::Protocol(e.to_string()),
                LlmError::Http { .. } => BackendError::Protocol(e.to_string()),
                LlmError::Transport { .. } => BackendError::Transport(e.to_string()),
            })?;
        Ok(BackendResponse {
            text: outcome.text,
            prompt_tokens: outcome.prompt_tokens,
            completion_tokens: outcome.completion_tokens,
        })
    }
}
