//! Scripted backend for offline runs and tests.
//!
//! ```json
//! {
//!   "default": "Serious injury accident",
//!   "responses": { "R17": "Fatal accident" },
//!   "rules": [
//!     { "record_id": "R3", "strategy": "ZS_CoT", "failures": ["rate_limited"],
//!       "response": "Reasoning... Minor or non-injury accident" }
//!   ]
//! }
//! ```
//!
//! Lookup order: first matching rule, then `responses` by record id, then
//! `default`. A rule's `failures` are injected in order on its first calls.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, BackendReply, ChatBackend, ChatRequest};
use super::ClientError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectedFailure {
    Auth,
    RateLimited,
    Server,
    Transport,
    Rejected,
    /// A reply cut off at the token cap.
    Truncated,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockRule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategy: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub digest: Option<String>,
    /// Substring of the final user message.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contains: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<InjectedFailure>,
}

impl MockRule {
    fn matches(&self, req: &ChatRequest<'_>) -> bool {
        let eq = |want: &Option<String>, got: &str| want.as_deref().is_none_or(|w| w == got);
        let user = req.messages.last().map(|m| m.content.as_str()).unwrap_or("");
        eq(&self.record_id, req.subject_record_id)
            && eq(&self.strategy, req.strategy.name())
            && eq(&self.model_id, &req.model.model_id)
            && eq(&self.digest, req.digest)
            && self.contains.as_deref().is_none_or(|c| user.contains(c))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MockScript {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub responses: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub rules: Vec<MockRule>,
    #[serde(default)]
    pub latency_ms: u64,
}

impl MockScript {
    pub fn from_json(text: &str) -> Result<Self, ClientError> {
        serde_json::from_str(text).map_err(|e| ClientError::Config(format!("invalid mock script: {e}")))
    }

    /// Always answers `text`.
    pub fn constant(text: impl Into<String>) -> Self {
        MockScript {
            default: Some(text.into()),
            ..Default::default()
        }
    }
}

pub struct MockBackend {
    script: MockScript,
    calls: AtomicUsize,
    rule_calls: Mutex<Vec<usize>>,
}

impl MockBackend {
    pub fn new(script: MockScript) -> Self {
        let n = script.rules.len();
        MockBackend {
            script,
            calls: AtomicUsize::new(0),
            rule_calls: Mutex::new(vec![0; n]),
        }
    }

    /// Total number of `send` calls, failed ones included.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    fn reply(&self, text: &str, finish_reason: &str) -> BackendReply {
        BackendReply {
            text: text.to_string(),
            finish_reason: Some(finish_reason.to_string()),
            latency_ms: self.script.latency_ms,
        }
    }

    fn fallback(&self, req: &ChatRequest<'_>) -> Result<BackendReply, BackendError> {
        self.script
            .responses
            .get(req.subject_record_id)
            .or(self.script.default.as_ref())
            .map(|t| self.reply(t, "stop"))
            .ok_or_else(|| BackendError::Rejected {
                status: 404,
                body: format!("no scripted response for record `{}`", req.subject_record_id),
            })
    }
}

impl ChatBackend for MockBackend {
    fn send(&self, req: &ChatRequest<'_>) -> Result<BackendReply, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let Some(idx) = self.script.rules.iter().position(|r| r.matches(req)) else {
            return self.fallback(req);
        };
        let rule = &self.script.rules[idx];
        let nth = {
            let mut counts = self.rule_calls.lock().expect("mock counter poisoned");
            counts[idx] += 1;
            counts[idx] - 1
        };
        if let Some(failure) = rule.failures.get(nth) {
            return match failure {
                InjectedFailure::Auth => Err(BackendError::Auth("scripted auth failure".into())),
                InjectedFailure::RateLimited => Err(BackendError::RateLimited),
                InjectedFailure::Server => Err(BackendError::Server(503)),
                InjectedFailure::Transport => Err(BackendError::Transport("scripted connection reset".into())),
                InjectedFailure::Rejected => Err(BackendError::Rejected {
                    status: 400,
                    body: "scripted bad request".into(),
                }),
                InjectedFailure::Truncated => Ok(self.reply("The crash was caused by", "length")),
            };
        }
        match &rule.response {
            Some(text) => Ok(self.reply(text, "stop")),
            None => self.fallback(req),
        }
    }
}
