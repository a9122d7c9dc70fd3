use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context;
use axum::http::HeaderValue;
use flowspace_core::llm::{ClientConfig, CompletionClient, HttpClient, MockClient};
use serde::Deserialize;
use tower_http::cors::{AllowOrigin, Any, CorsLayer};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServerConfig {
    pub listen: SocketAddr,
    pub storage_dir: Option<PathBuf>,
    /// Origins allowed by CORS; `"*"` allows any.
    pub cors_origins: Vec<String>,
    pub default_k: usize,
    pub seed: u64,
    pub llm: LlmSettings,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlmSettings {
    /// `http` or `mock`.
    pub provider: String,
    pub base_url: Option<String>,
    pub api_key: Option<String>,
    pub model: Option<String>,
    pub timeout_secs: Option<u64>,
    /// Fixture file for the mock provider; echoes when absent.
    pub mock_fixture: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".parse().unwrap(),
            storage_dir: None,
            cors_origins: vec!["http://localhost:5173".into()],
            default_k: flowspace_core::generator::DEFAULT_PLAN_CANDIDATES,
            seed: 0,
            llm: LlmSettings::default(),
        }
    }
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            provider: "http".into(),
            base_url: None,
            api_key: None,
            model: None,
            timeout_secs: None,
            mock_fixture: None,
        }
    }
}

impl ServerConfig {
    pub fn from_file(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    pub fn cors(&self) -> CorsLayer {
        let layer = CorsLayer::new().allow_methods(Any).allow_headers(Any);
        if self.cors_origins.iter().any(|o| o == "*") {
            layer.allow_origin(Any)
        } else {
            let origins: Vec<HeaderValue> = self.cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
            layer.allow_origin(AllowOrigin::list(origins))
        }
    }
}

impl LlmSettings {
    /// Builds the completion client. Settings left unset fall back to the
    /// `FLOWSPACE_LLM_*` environment variables.
    pub fn client(&self) -> anyhow::Result<Arc<dyn CompletionClient>> {
        match self.provider.as_str() {
            "mock" => {
                let client = match &self.mock_fixture {
                    Some(path) => {
                        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                        MockClient::from_json(&text).with_context(|| format!("parsing {}", path.display()))?
                    }
                    None => MockClient::echo(),
                };
                Ok(Arc::new(client))
            }
            "http" => {
                let env = ClientConfig::from_env();
                let base_url = self
                    .base_url
                    .clone()
                    .or_else(|| env.as_ref().map(|c| c.base_url.clone()))
                    .context("no LLM base URL: set llm.base_url or FLOWSPACE_LLM_BASE_URL, or use the mock provider")?;
                let mut config = env.unwrap_or(ClientConfig {
                    base_url: base_url.clone(),
                    api_key: None,
                    model_id: flowspace_core::llm::DEFAULT_MODEL.into(),
                    timeout_secs: 120,
                });
                config.base_url = base_url;
                if let Some(key) = &self.api_key {
                    config.api_key = Some(key.clone());
                }
                if let Some(model) = &self.model {
                    config.model_id = model.clone();
                }
                if let Some(timeout) = self.timeout_secs {
                    config.timeout_secs = timeout;
                }
                Ok(Arc::new(HttpClient::new(config)?))
            }
            other => anyhow::bail!("unknown llm provider {other:?}; expected \"http\" or \"mock\""),
        }
    }
}
