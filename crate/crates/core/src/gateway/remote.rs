use reqwest::blocking::Client;
use reqwest::StatusCode;
use serde::Deserialize;
use serde_json::json;

use super::{BackendError, BackendReply, CompletionBackend, CompletionRequest, ModelConfig, Usage};

pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

/// OpenAI-compatible chat-completions backend.
pub struct OpenAiBackend {
    client: Client,
    base_url: String,
    api_key: String,
}

impl OpenAiBackend {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Result<Self, BackendError> {
        let client = Client::builder()
            .build()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        Ok(Self {
            client,
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        })
    }

    /// Reads the key from the named environment variable.
    pub fn from_env(base_url: impl Into<String>, key_var: &str) -> Result<Self, BackendError> {
        let key = std::env::var(key_var)
            .map_err(|_| BackendError::Auth(format!("environment variable {key_var} is not set")))?;
        Self::new(base_url, key)
    }
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<ChatUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct ChatUsage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

pub(crate) fn classify_status(status: StatusCode, body: String) -> BackendError {
    let code = status.as_u16();
    match code {
        401 | 403 => BackendError::Auth(body),
        429 => BackendError::RateLimited(body),
        408 => BackendError::Timeout,
        400 | 404 | 413 | 422 => BackendError::InvalidRequest(body),
        500..=599 => BackendError::Server { status: code, message: body },
        _ => BackendError::Rejected { status: code, message: body },
    }
}

impl CompletionBackend for OpenAiBackend {
    fn complete(&self, request: &CompletionRequest, config: &ModelConfig) -> Result<BackendReply, BackendError> {
        let mut messages = Vec::new();
        if !request.system.is_empty() {
            messages.push(json!({"role": "system", "content": request.system}));
        }
        messages.push(json!({"role": "user", "content": request.user}));
        let body = json!({
            "model": config.model_id,
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
            "messages": messages,
        });
        let response = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .timeout(config.request_timeout())
            .json(&body)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    BackendError::Timeout
                } else {
                    BackendError::Transport(e.to_string())
                }
            })?;
        let status = response.status();
        if !status.is_success() {
            let text = response.text().unwrap_or_default();
            return Err(classify_status(status, text));
        }
        let parsed: ChatResponse = response
            .json()
            .map_err(|e| BackendError::Transport(format!("undecodable response: {e}")))?;
        let text = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::Transport("response has no message content".into()))?;
        let usage = parsed
            .usage
            .map(|u| Usage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            })
            .unwrap_or_default();
        Ok(BackendReply { text, usage })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_classes() {
        let c = |s: u16| classify_status(StatusCode::from_u16(s).unwrap(), String::new());
        assert!(matches!(c(401), BackendError::Auth(_)));
        assert!(matches!(c(429), BackendError::RateLimited(_)));
        assert!(matches!(c(400), BackendError::InvalidRequest(_)));
        assert!(matches!(c(503), BackendError::Server { status: 503, .. }));
        assert!(c(503).is_retryable());
        assert!(!c(400).is_retryable());
        assert!(!c(418).is_retryable());
    }

    #[test]
    fn missing_key_is_auth_error() {
        let err = OpenAiBackend::from_env(DEFAULT_BASE_URL, "SENTIMON_TEST_UNSET_KEY_VAR").err().unwrap();
        assert!(matches!(err, BackendError::Auth(_)));
    }
}
