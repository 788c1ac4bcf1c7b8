use std::time::Duration;

/// Connection settings shared by the remote generation and embedding clients.
#[derive(Debug, Clone, PartialEq)]
pub struct ApiConfig {
    pub base_url: String,
    pub model: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
}

pub const ENV_API_BASE: &str = "NNM_API_BASE";
pub const ENV_MODEL: &str = "NNM_MODEL";
pub const ENV_API_KEY: &str = "NNM_API_KEY";

impl ApiConfig {
    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var(ENV_API_BASE).ok()?;
        let model = std::env::var(ENV_MODEL).ok()?;
        Some(Self {
            base_url,
            model,
            api_key: std::env::var(ENV_API_KEY).ok().filter(|k| !k.is_empty()),
            timeout: Duration::from_secs(60),
        })
    }

    pub(crate) fn endpoint(&self, path: &str) -> String {
        format!("{}/{}", self.base_url.trim_end_matches('/'), path)
    }
}

pub(crate) fn agent(timeout: Duration) -> ureq::Agent {
    ureq::Agent::config_builder()
        .timeout_global(Some(timeout))
        .http_status_as_error(false)
        .build()
        .into()
}
