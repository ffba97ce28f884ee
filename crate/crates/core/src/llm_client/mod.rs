//! Chat-completion client with retries, rate limiting and a response cache.

mod backend;
mod cache;
mod mock;

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompting::{ChatMessage, ChatPrompt};

pub use backend::{wire_body, BackendError, BackendReply, ChatBackend, ChatRequest, HttpBackend};
pub use cache::{CacheEntry, ResponseCache};
pub use mock::{InjectedFailure, MockBackend, MockRule, MockScript};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("rate limited after {attempts} attempts")]
    RateLimited { attempts: u32 },
    #[error("transport failure after {attempts} attempts: {message}")]
    Transport { attempts: u32, message: String },
    #[error("endpoint rejected the request (HTTP {status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("response truncated at the output token cap")]
    Truncated { partial: String },
    #[error("cache line {line} is corrupt: {reason}")]
    CacheCorrupt { line: usize, reason: String },
    #[error("cache I/O: {0}")]
    CacheIo(String),
    #[error("invalid client configuration: {0}")]
    Config(String),
}

impl ClientError {
    /// Short machine-readable name.
    pub fn kind(&self) -> &'static str {
        match self {
            ClientError::Auth(_) => "auth",
            ClientError::RateLimited { .. } => "rate_limited",
            ClientError::Transport { .. } => "transport",
            ClientError::Rejected { .. } => "rejected",
            ClientError::Truncated { .. } => "truncated",
            ClientError::CacheCorrupt { .. } => "cache_corrupt",
            ClientError::CacheIo(_) => "cache_io",
            ClientError::Config(_) => "config",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    /// Ask endpoints that support it to disable sampling outright.
    pub deterministic: bool,
    pub max_output_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.0,
            top_p: 0.0001,
            deterministic: true,
            max_output_tokens: 1024,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), ClientError> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(ClientError::Config(format!("temperature {} must be >= 0", self.temperature)));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(ClientError::Config(format!("top_p {} must be in (0, 1]", self.top_p)));
        }
        if self.max_output_tokens == 0 {
            return Err(ClientError::Config("max_output_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub model_id: String,
    #[serde(default = "default_endpoint")]
    pub endpoint_url: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub auth_ref: Option<String>,
    /// Per-model override of the shared `top_p`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_p: Option<f64>,
    /// Endpoint understands `do_sample`.
    #[serde(default)]
    pub sampling_control: bool,
}

fn default_endpoint() -> String {
    DEFAULT_ENDPOINT.to_string()
}

impl ModelSpec {
    pub fn new(model_id: impl Into<String>) -> Self {
        ModelSpec {
            model_id: model_id.into(),
            endpoint_url: default_endpoint(),
            auth_ref: None,
            top_p: None,
            sampling_control: false,
        }
    }

    /// Shared parameters with this model's overrides applied.
    pub fn effective_params(&self, shared: &DecodingParams) -> DecodingParams {
        DecodingParams {
            top_p: self.top_p.unwrap_or(shared.top_p),
            ..*shared
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LLMResponse {
    pub text: String,
    pub model_id: String,
    pub cached: bool,
    pub latency_ms: u64,
    pub request_digest: String,
    /// Endpoint calls made; 0 on a cache hit.
    pub attempts: u32,
    /// `do_sample=false` was sent.
    pub sampling_disabled: bool,
}

#[derive(Serialize)]
struct DigestInput<'a> {
    model_id: &'a str,
    messages: &'a [ChatMessage],
    params: &'a DecodingParams,
}

/// SHA-256 (hex) over the canonical JSON of model, messages and parameters.
pub fn request_digest(model_id: &str, messages: &[ChatMessage], params: &DecodingParams) -> String {
    let input = DigestInput {
        model_id,
        messages,
        params,
    };
    let bytes = serde_json::to_vec(&input).expect("digest input serializes");
    hex::encode(Sha256::digest(&bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(30),
        }
    }
}

impl RetryPolicy {
    pub fn immediate(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            base_delay: Duration::ZERO,
            max_delay: Duration::ZERO,
        }
    }

    /// Backoff before retry number `retry` (0-based).
    pub fn delay(&self, retry: u32) -> Duration {
        self.base_delay
            .saturating_mul(2u32.saturating_pow(retry))
            .min(self.max_delay)
    }
}

/// Enforces a minimum gap between request starts across threads.
#[derive(Debug)]
struct RateLimiter {
    interval: Duration,
    last: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn wait(&self) {
        let mut last = self.last.lock().expect("rate limiter poisoned");
        if let Some(prev) = *last {
            let ready = prev + self.interval;
            let now = Instant::now();
            if ready > now {
                std::thread::sleep(ready - now);
            }
        }
        *last = Some(Instant::now());
    }
}

pub struct LlmClient {
    backend: Arc<dyn ChatBackend>,
    retry: RetryPolicy,
    limiter: Option<RateLimiter>,
}

impl LlmClient {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        LlmClient {
            backend,
            retry: RetryPolicy::default(),
            limiter: None,
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_min_interval(mut self, interval: Duration) -> Self {
        self.limiter = (!interval.is_zero()).then(|| RateLimiter {
            interval,
            last: Mutex::new(None),
        });
        self
    }

    /// One endpoint request, retried on transient failures.
    pub fn complete(
        &self,
        prompt: &ChatPrompt,
        model: &ModelSpec,
        params: &DecodingParams,
    ) -> Result<LLMResponse, ClientError> {
        params.validate()?;
        let digest = request_digest(&model.model_id, &prompt.messages, params);
        self.send_with_retry(prompt, model, params, &digest)
    }

    /// Like [`complete`](Self::complete), but served from `cache` when the
    /// digest is known. Only successful responses are stored.
    pub fn cached_complete(
        &self,
        prompt: &ChatPrompt,
        model: &ModelSpec,
        params: &DecodingParams,
        cache: &ResponseCache,
    ) -> Result<LLMResponse, ClientError> {
        params.validate()?;
        let digest = request_digest(&model.model_id, &prompt.messages, params);
        if let Some(hit) = cache.get(&digest) {
            return Ok(LLMResponse {
                text: hit.response_text,
                model_id: model.model_id.clone(),
                cached: true,
                latency_ms: 0,
                request_digest: digest,
                attempts: 0,
                sampling_disabled: params.deterministic && model.sampling_control,
            });
        }
        let response = self.send_with_retry(prompt, model, params, &digest)?;
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        cache.insert(CacheEntry {
            digest,
            model_id: model.model_id.clone(),
            params: *params,
            messages: prompt.messages.clone(),
            response_text: response.text.clone(),
            timestamp,
        })?;
        Ok(response)
    }

    fn send_with_retry(
        &self,
        prompt: &ChatPrompt,
        model: &ModelSpec,
        params: &DecodingParams,
        digest: &str,
    ) -> Result<LLMResponse, ClientError> {
        let request = ChatRequest {
            model,
            messages: &prompt.messages,
            params,
            subject_record_id: &prompt.subject_record_id,
            strategy: prompt.strategy,
            digest,
        };
        let mut attempts = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.wait();
            }
            attempts += 1;
            match self.backend.send(&request) {
                Ok(reply) if reply.finish_reason.as_deref() == Some("length") => {
                    return Err(ClientError::Truncated { partial: reply.text });
                }
                Ok(reply) => {
                    return Ok(LLMResponse {
                        text: reply.text,
                        model_id: model.model_id.clone(),
                        cached: false,
                        latency_ms: reply.latency_ms,
                        request_digest: digest.to_string(),
                        attempts,
                        sampling_disabled: params.deterministic && model.sampling_control,
                    });
                }
                Err(e) if e.is_transient() && attempts <= self.retry.max_retries => {
                    tracing::warn!(record = prompt.subject_record_id, attempts, error = ?e, "retrying");
                    std::thread::sleep(self.retry.delay(attempts - 1));
                }
                Err(e) => return Err(final_error(e, attempts)),
            }
        }
    }
}

fn final_error(e: BackendError, attempts: u32) -> ClientError {
    match e {
        BackendError::Auth(m) => ClientError::Auth(m),
        BackendError::RateLimited => ClientError::RateLimited { attempts },
        BackendError::Server(status) => ClientError::Transport {
            attempts,
            message: format!("HTTP {status}"),
        },
        BackendError::Transport(message) => ClientError::Transport { attempts, message },
        BackendError::Rejected { status, body } => ClientError::Rejected { status, message: body },
    }
}
