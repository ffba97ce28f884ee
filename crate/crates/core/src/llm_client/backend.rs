use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::prompting::{ChatMessage, PromptStrategy};

use super::{DecodingParams, ModelSpec};

/// Everything a backend may need for one call.
///
/// `subject_record_id`, `strategy` and `digest` never go on the wire; they
/// let scripted backends key their answers.
#[derive(Debug, Clone, Copy)]
pub struct ChatRequest<'a> {
    pub model: &'a ModelSpec,
    pub messages: &'a [ChatMessage],
    pub params: &'a DecodingParams,
    pub subject_record_id: &'a str,
    pub strategy: PromptStrategy,
    pub digest: &'a str,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub finish_reason: Option<String>,
    pub latency_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "detail")]
pub enum BackendError {
    Auth(String),
    RateLimited,
    Server(u16),
    Transport(String),
    Rejected { status: u16, body: String },
}

impl BackendError {
    pub fn is_transient(&self) -> bool {
        matches!(self, BackendError::RateLimited | BackendError::Server(_) | BackendError::Transport(_))
    }
}

pub trait ChatBackend: Send + Sync {
    fn send(&self, request: &ChatRequest<'_>) -> Result<BackendReply, BackendError>;
}

/// JSON body for an OpenAI-compatible chat-completion endpoint.
pub fn wire_body(request: &ChatRequest<'_>) -> serde_json::Value {
    let mut body = json!({
        "model": request.model.model_id,
        "messages": request.messages,
        "temperature": request.params.temperature,
        "top_p": request.params.top_p,
        "max_tokens": request.params.max_output_tokens,
    });
    if request.params.deterministic && request.model.sampling_control {
        body["do_sample"] = json!(false);
    }
    body
}

/// Blocking HTTP(S) backend.
pub struct HttpBackend {
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(HttpBackend { client })
    }
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireMessage,
    #[serde(default)]
    finish_reason: Option<String>,
}

#[derive(Deserialize)]
struct WireMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatBackend for HttpBackend {
    fn send(&self, request: &ChatRequest<'_>) -> Result<BackendReply, BackendError> {
        let mut builder = self.client.post(&request.model.endpoint_url).json(&wire_body(request));
        if let Some(var) = &request.model.auth_ref {
            let key = std::env::var(var)
                .map_err(|_| BackendError::Auth(format!("environment variable `{var}` is not set")))?;
            builder = builder.bearer_auth(key);
        }
        let started = Instant::now();
        let resp = builder.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        let latency_ms = started.elapsed().as_millis() as u64;
        match status {
            200..=299 => {}
            401 | 403 => return Err(BackendError::Auth(format!("HTTP {status}"))),
            429 => return Err(BackendError::RateLimited),
            500..=599 => return Err(BackendError::Server(status)),
            _ => return Err(BackendError::Rejected { status, body }),
        }
        let parsed: WireResponse = serde_json::from_str(&body)
            .map_err(|e| BackendError::Transport(format!("undecodable response body: {e}")))?;
        let choice = parsed
            .choices
            .into_iter()
            .next()
            .ok_or_else(|| BackendError::Transport("response has no choices".into()))?;
        Ok(BackendReply {
            text: choice.message.content.unwrap_or_default(),
            finish_reason: choice.finish_reason,
            latency_ms,
        })
    }
}
