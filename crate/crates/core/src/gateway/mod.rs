//! Completion-model gateway.
//!
//! [`Gateway`] wraps a [`CompletionBackend`] with a context-budget check,
//! token-bucket admission and bounded exponential-backoff retries. Backends:
//! [`MockBackend`] (deterministic, scriptable faults), [`CassetteBackend`]
//! (recorded request/response pairs) and [`OpenAiBackend`] (remote HTTP).

mod cassette;
mod clock;
mod config;
mod limiter;
mod mock;
mod remote;

use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dossier::DisclosureSummary;
use crate::ingest::{estimate_tokens, Disclosure};

pub use cassette::{Cassette, CassetteBackend, CassetteEntry, CassetteMode};
pub use clock::{Clock, ManualClock, SystemClock};
pub use config::{BackendSettings, GatewayConfig};
pub use limiter::TokenBucket;
pub use mock::{first_sentence, MockBackend};
pub use remote::OpenAiBackend;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model_id: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_output")]
    pub max_output_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub request_timeout_secs: u64,
    /// Prompt plus output budget, in estimated tokens. `None` disables the
    /// pre-flight check.
    #[serde(default)]
    pub context_window_tokens: Option<usize>,
}

fn default_max_output() -> u32 {
    512
}

fn default_timeout_secs() -> u64 {
    60
}

impl ModelConfig {
    pub fn new(model_id: impl Into<String>) -> Self {
        Self {
            model_id: model_id.into(),
            temperature: 0.0,
            max_output_tokens: default_max_output(),
            request_timeout_secs: default_timeout_secs(),
            context_window_tokens: None,
        }
    }

    pub fn request_timeout(&self) -> Duration {
        Duration::from_secs(self.request_timeout_secs)
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.temperature.is_finite() && self.temperature >= 0.0) {
            return Err(GatewayError::InvalidRequest(format!(
                "temperature must be >= 0, got {}",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest("max_output_tokens must be >= 1".into()));
        }
        if self.model_id.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("model_id is empty".into()));
        }
        Ok(())
    }
}

/// What a request is for. Carried for logging and mock routing; not part of
/// the fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Summarize,
    Rate,
    #[default]
    Other,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub system: String,
    pub user: String,
    #[serde(default)]
    pub purpose: Purpose,
}

impl CompletionRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            purpose: Purpose::Other,
        }
    }

    pub fn with_purpose(mut self, purpose: Purpose) -> Self {
        self.purpose = purpose;
        self
    }

    /// Hex SHA-256 of the model id and both prompt texts.
    pub fn fingerprint(&self, model_id: &str) -> String {
        let mut h = Sha256::new();
        for part in [model_id, &self.system, &self.user] {
            h.update((part.len() as u64).to_le_bytes());
            h.update(part.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn estimated_tokens(&self) -> usize {
        estimate_tokens(&self.system) + estimate_tokens(&self.user)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// What a backend returns for one attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Usage,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletionResult {
    pub text: String,
    pub usage: Usage,
    /// Wall time of the successful attempt.
    pub latency: Duration,
    pub attempts: u32,
}

/// One failed backend attempt.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BackendError {
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("timed out")]
    Timeout,
    #[error("server error {status}: {message}")]
    Server { status: u16, message: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("authentication failed: {0}")]
    Auth(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("rejected ({status}): {message}")]
    Rejected { status: u16, message: String },
    #[error("no recorded response for fingerprint {0}")]
    NotRecorded(String),
}

impl BackendError {
    pub fn is_retryable(&self) -> bool {
        matches!(
            self,
            BackendError::RateLimited(_)
                | BackendError::Timeout
                | BackendError::Server { .. }
                | BackendError::Transport(_)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GatewayError {
    /// Refused before any backend call.
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("rate limit still hit after {attempts} attempts: {message}")]
    RateLimitExhausted { attempts: u32, message: String },
    #[error("timed out after {attempts} attempts")]
    Timeout { attempts: u32 },
    #[error("backend unavailable after {attempts} attempts: {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("authentication failed after {attempts} attempt(s): {message}")]
    Auth { attempts: u32, message: String },
    #[error("backend rejected the request after {attempts} attempt(s): {message}")]
    Rejected { attempts: u32, message: String },
    #[error("no recorded response for fingerprint {fingerprint}")]
    NotRecorded { fingerprint: String },
    #[error("backend returned an empty completion")]
    EmptyOutput,
}

impl GatewayError {
    pub fn attempts(&self) -> u32 {
        match self {
            GatewayError::InvalidRequest(_) | GatewayError::NotRecorded { .. } => 0,
            GatewayError::EmptyOutput => 1,
            GatewayError::RateLimitExhausted { attempts, .. }
            | GatewayError::Timeout { attempts }
            | GatewayError::Unavailable { attempts, .. }
            | GatewayError::Auth { attempts, .. }
            | GatewayError::Rejected { attempts, .. } => *attempts,
        }
    }

    fn from_backend(err: BackendError, attempts: u32) -> Self {
        match err {
            BackendError::RateLimited(message) => GatewayError::RateLimitExhausted { attempts, message },
            BackendError::Timeout => GatewayError::Timeout { attempts },
            BackendError::Server { status, message } => GatewayError::Unavailable {
                attempts,
                message: format!("{status}: {message}"),
            },
            BackendError::Transport(message) => GatewayError::Unavailable { attempts, message },
            BackendError::Auth(message) => GatewayError::Auth { attempts, message },
            BackendError::InvalidRequest(message) => GatewayError::Rejected { attempts, message },
            BackendError::Rejected { status, message } => GatewayError::Rejected {
                attempts,
                message: format!("{status}: {message}"),
            },
            BackendError::NotRecorded(fingerprint) => GatewayError::NotRecorded { fingerprint },
        }
    }
}

pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest, config: &ModelConfig) -> Result<BackendReply, BackendError>;
}

impl<B: CompletionBackend + ?Sized> CompletionBackend for Arc<B> {
    fn complete(&self, request: &CompletionRequest, config: &ModelConfig) -> Result<BackendReply, BackendError> {
        (**self).complete(request, config)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryPolicy {
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub base_delay_ms: u64,
    pub max_delay_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_retries: 3,
            base_delay_ms: 500,
            max_delay_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based): base · 2^(retry-1), capped.
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.base_delay_ms.saturating_mul(factor).min(self.max_delay_ms))
    }
}

/// Shareable front door to a backend. Cloning is cheap.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn CompletionBackend>,
    retry: RetryPolicy,
    limiter: Option<Arc<TokenBucket>>,
    clock: Arc<dyn Clock>,
}

impl Gateway {
    pub fn new(backend: impl CompletionBackend + 'static) -> Self {
        Self {
            backend: Arc::new(backend),
            retry: RetryPolicy::default(),
            limiter: None,
            clock: Arc::new(SystemClock::new()),
        }
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_rate_limit(mut self, requests_per_minute: u32) -> Self {
        self.limiter = Some(Arc::new(TokenBucket::per_minute(requests_per_minute)));
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn retry_policy(&self) -> RetryPolicy {
        self.retry
    }

    pub fn complete(&self, request: &CompletionRequest, config: &ModelConfig) -> Result<CompletionResult, GatewayError> {
        config.validate()?;
        if request.system.trim().is_empty() && request.user.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("request text is empty".into()));
        }
        if let Some(window) = config.context_window_tokens {
            let needed = request.estimated_tokens() + config.max_output_tokens as usize;
            if needed > window {
                return Err(GatewayError::InvalidRequest(format!(
                    "request needs ~{needed} tokens, context budget is {window}"
                )));
            }
        }

        let mut attempts = 0u32;
        loop {
            if let Some(limiter) = &self.limiter {
                limiter.acquire(self.clock.as_ref());
            }
            attempts += 1;
            let started = self.clock.now();
            match self.backend.complete(request, config) {
                Ok(reply) => {
                    if reply.text.trim().is_empty() {
                        return Err(GatewayError::EmptyOutput);
                    }
                    return Ok(CompletionResult {
                        text: reply.text,
                        usage: reply.usage,
                        latency: self.clock.now().saturating_sub(started),
                        attempts,
                    });
                }
                Err(err) if err.is_retryable() && attempts <= self.retry.max_retries => {
                    let delay = self.retry.delay(attempts);
                    tracing::warn!(attempt = attempts, ?delay, error = %err, "retrying completion");
                    self.clock.sleep(delay);
                }
                Err(err) => return Err(GatewayError::from_backend(err, attempts)),
            }
        }
    }

    /// One-sentence English summary of a disclosure.
    pub fn summarize(&self, disclosure: &Disclosure, config: &ModelConfig) -> Result<DisclosureSummary, GatewayError> {
        if disclosure.body.trim().is_empty() {
            return Err(GatewayError::InvalidRequest(format!(
                "disclosure `{}` has an empty body",
                disclosure.title
            )));
        }
        let request = summary_request(disclosure);
        let result = self.complete(&request, config)?;
        Ok(DisclosureSummary {
            disclosed_at: disclosure.disclosed_at,
            title: disclosure.title.clone(),
            summary: result.text.trim().to_string(),
        })
    }
}

pub const SUMMARY_INSTRUCTION: &str = "You summarize corporate timely disclosures for financial analysts. \
Read the disclosure below and respond in English with a single concise sentence that states what was \
disclosed, keeping the key figures (amounts, share counts, prices, dates). The disclosure may be written \
in Korean; always answer in English. Output only the summary sentence.";

/// The body starts after the first blank line of the user text.
pub fn summary_request(d: &Disclosure) -> CompletionRequest {
    let user = format!(
        "Company: {}\nDate: {}\nTitle: {}\n\n{}",
        d.company_name,
        d.disclosed_at.format("%Y-%m-%d %H:%M"),
        d.title.trim(),
        d.body.trim()
    );
    CompletionRequest::new(SUMMARY_INSTRUCTION, user).with_purpose(Purpose::Summarize)
}
