use std::time::Duration;

use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::prompt::{PromptBundle, ANSWER_MARKER};
use crate::labels::{Category, RegionSet};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("{message}")]
pub struct TransportError {
    pub message: String,
    /// Whether repeating the request may succeed.
    pub retryable: bool,
}

impl TransportError {
    pub fn new(message: impl Into<String>, retryable: bool) -> Self {
        TransportError {
            message: message.into(),
            retryable,
        }
    }
}

/// A multimodal model that answers a prompt bundle with free text.
pub trait ModelClient: Send + Sync {
    fn send(&self, bundle: &PromptBundle) -> Result<String, TransportError>;

    fn describe(&self) -> String;
}

impl<C: ModelClient + ?Sized> ModelClient for Box<C> {
    fn send(&self, bundle: &PromptBundle) -> Result<String, TransportError> {
        (**self).send(bundle)
    }

    fn describe(&self) -> String {
        (**self).describe()
    }
}

/// How the mock picks its answer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "strategy", content = "value")]
pub enum MockStrategy {
    /// Always the given text.
    Fixed(String),
    /// The region with the largest extent in the evidence, `other` without
    /// evidence.
    LargestExtent,
    /// A label chosen from a hash of the image pixels.
    ImageDigest,
}

/// Deterministic offline client.
#[derive(Debug, Clone)]
pub struct MockClient {
    pub strategy: MockStrategy,
}

impl MockClient {
    pub fn new(strategy: MockStrategy) -> Self {
        MockClient { strategy }
    }

    /// The label the mock answers with for a bundle.
    pub fn implied_label(&self, bundle: &PromptBundle) -> Option<RegionSet> {
        match &self.strategy {
            MockStrategy::Fixed(text) => text.parse().ok(),
            MockStrategy::LargestExtent => Some(
                bundle
                    .evidence
                    .as_ref()
                    .and_then(|e| e.largest_region())
                    .map_or_else(RegionSet::other, RegionSet::single),
            ),
            MockStrategy::ImageDigest => {
                let digest = bundle.image.as_ref().map_or(0, |i| i.digest());
                let c = Category::ALL[(digest % Category::ALL.len() as u64) as usize];
                Some(c.region().map_or_else(RegionSet::other, RegionSet::single))
            }
        }
    }
}

impl ModelClient for MockClient {
    fn send(&self, bundle: &PromptBundle) -> Result<String, TransportError> {
        match (&self.strategy, self.implied_label(bundle)) {
            (MockStrategy::Fixed(text), None) => Ok(text.clone()),
            (_, Some(label)) => Ok(format!(
                "The views were reviewed against the region definitions.\n{ANSWER_MARKER} {label}"
            )),
            (_, None) => Ok("No decision.".into()),
        }
    }

    fn describe(&self) -> String {
        format!("mock:{:?}", self.strategy)
    }
}

/// Settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    /// Base URL; `/chat/completions` is appended.
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the bearer token.
    pub token_env: Option<String>,
    pub timeout_secs: u64,
}

pub struct HttpClient {
    config: HttpConfig,
    token: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpClient {
    pub fn new(config: HttpConfig) -> Result<Self, TransportError> {
        let token = match &config.token_env {
            Some(var) => Some(std::env::var(var).map_err(|_| TransportError::new(format!("environment variable {var} is not set"), false))?),
            None => None,
        };
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| TransportError::new(e.to_string(), false))?;
        Ok(HttpClient { config, token, http })
    }

    /// Request body for a bundle.
    pub fn request_body(&self, bundle: &PromptBundle) -> serde_json::Value {
        let mut user = vec![serde_json::json!({"type": "text", "text": bundle.user_text})];
        if let Some(img) = &bundle.image {
            let b64 = base64::engine::general_purpose::STANDARD.encode(img.to_png());
            user.push(serde_json::json!({
                "type": "image_url",
                "image_url": {"url": format!("data:image/png;base64,{b64}")}
            }));
        }
        serde_json::json!({
            "model": self.config.model,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": bundle.system_text},
                {"role": "user", "content": user},
            ],
        })
    }
}

impl ModelClient for HttpClient {
    fn send(&self, bundle: &PromptBundle) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut req = self.http.post(url).json(&self.request_body(bundle));
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| TransportError::new(e.to_string(), true))?;
        let status = resp.status();
        if !status.is_success() {
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(TransportError::new(format!("HTTP {status}"), retryable));
        }
        let body: serde_json::Value = resp.json().map_err(|e| TransportError::new(e.to_string(), false))?;
        body["choices"][0]["message"]["content"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| TransportError::new("response has no message content", false))
    }

    fn describe(&self) -> String {
        format!("http:{}:{}", self.config.endpoint, self.config.model)
    }
}

/// Retries retryable failures with exponential backoff.
pub struct RetryingClient<C> {
    pub inner: C,
    pub max_attempts: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl<C: ModelClient> RetryingClient<C> {
    pub fn new(inner: C, max_attempts: u32) -> Self {
        RetryingClient {
            inner,
            max_attempts: max_attempts.max(1),
            base_delay: Duration::from_millis(500),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl<C: ModelClient> ModelClient for RetryingClient<C> {
    fn send(&self, bundle: &PromptBundle) -> Result<String, TransportError> {
        let mut attempt = 0;
        loop {
            match self.inner.send(bundle) {
                Err(e) if e.retryable && attempt + 1 < self.max_attempts => {
                    let delay = self.base_delay.saturating_mul(1 << attempt.min(16)).min(self.max_delay);
                    log::warn!("model request failed ({e}); retrying in {delay:?}");
                    std::thread::sleep(delay);
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn describe(&self) -> String {
        format!("retry({}, {})", self.max_attempts, self.inner.describe())
    }
}
