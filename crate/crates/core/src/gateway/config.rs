use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::remote::DEFAULT_BASE_URL;
use super::{CassetteBackend, Gateway, MockBackend, ModelConfig, OpenAiBackend, RetryPolicy};

/// Gateway configuration file (TOML).
///
/// ```toml
/// [backend]
/// kind = "openai"            # "mock" | "cassette" | "openai"
/// api_key_env = "OPENAI_API_KEY"
///
/// [model]
/// model_id = "gpt-4"
/// temperature = 0.0
///
/// [retry]
/// max_retries = 3
///
/// [rate_limit]
/// requests_per_minute = 60
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub backend: BackendSettings,
    pub model: ModelConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default)]
    pub rate_limit: Option<RateLimitSettings>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RateLimitSettings {
    pub requests_per_minute: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendSettings {
    Mock,
    Cassette {
        path: PathBuf,
        /// When set, misses are forwarded to this remote and recorded.
        #[serde(default)]
        record_from: Option<RemoteSettings>,
    },
    Openai(RemoteSettings),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemoteSettings {
    #[serde(default = "default_base_url")]
    pub base_url: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
}

fn default_base_url() -> String {
    DEFAULT_BASE_URL.to_string()
}

fn default_key_env() -> String {
    "OPENAI_API_KEY".to_string()
}

impl GatewayConfig {
    /// Mock backend with default knobs.
    pub fn mock(model_id: &str) -> Self {
        Self {
            backend: BackendSettings::Mock,
            model: ModelConfig::new(model_id),
            retry: RetryPolicy::default(),
            rate_limit: None,
        }
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        let cfg: GatewayConfig = toml::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))?;
        cfg.model.validate().map_err(|e| e.to_string())?;
        Ok(cfg)
    }

    pub fn build(&self) -> Result<Gateway, String> {
        let remote = |r: &RemoteSettings| OpenAiBackend::from_env(r.base_url.clone(), &r.api_key_env).map_err(|e| e.to_string());
        let gateway = match &self.backend {
            BackendSettings::Mock => Gateway::new(MockBackend::standard()),
            BackendSettings::Cassette { path, record_from: None } => {
                Gateway::new(CassetteBackend::open(path).map_err(|e| format!("{}: {e}", path.display()))?)
            }
            BackendSettings::Cassette {
                path,
                record_from: Some(r),
            } => Gateway::new(
                CassetteBackend::record(Box::new(remote(r)?), path.clone())
                    .map_err(|e| format!("{}: {e}", path.display()))?,
            ),
            BackendSettings::Openai(r) => Gateway::new(remote(r)?),
        };
        let gateway = gateway.with_retry(self.retry);
        Ok(match self.rate_limit {
            Some(rl) => gateway.with_rate_limit(rl.requests_per_minute),
            None => gateway,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_toml() {
        let cfg: GatewayConfig = toml::from_str(
            r#"
            [backend]
            kind = "openai"
            api_key_env = "MY_KEY"

            [model]
            model_id = "gpt-4"
            max_output_tokens = 300

            [rate_limit]
            requests_per_minute = 20
            "#,
        )
        .unwrap();
        assert_eq!(
            cfg.backend,
            BackendSettings::Openai(RemoteSettings {
                base_url: DEFAULT_BASE_URL.into(),
                api_key_env: "MY_KEY".into()
            })
        );
        assert_eq!(cfg.model.temperature, 0.0);
        assert_eq!(cfg.model.max_output_tokens, 300);
        assert_eq!(cfg.retry, RetryPolicy::default());
        assert_eq!(cfg.rate_limit.unwrap().requests_per_minute, 20);
    }

    #[test]
    fn mock_builds() {
        assert!(GatewayConfig::mock("m").build().is_ok());
    }
}
