use std::fmt;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{FinishReason, Provider, RawResponse};
use crate::seedgen::{PromptBundle, ProviderKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    /// Base URL (`.../v1`) or the full `/chat/completions` URL.
    pub endpoint_url: String,
    pub model_name: String,
    pub temperature: f64,
    pub top_p: f64,
    pub max_new_tokens: u32,
    /// Request the provider's JSON object output mode.
    pub structured_output: bool,
    /// Environment variable holding the bearer token; `None` sends no auth.
    pub api_key_env: Option<String>,
    pub max_retries: u32,
    pub backoff_base_ms: u64,
    pub timeout_secs: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        Self {
            endpoint_url: "https://api.openai.com/v1".to_string(),
            model_name: "gpt-4.1-2025-04-14".to_string(),
            temperature: 0.8,
            top_p: 0.8,
            max_new_tokens: 8192,
            structured_output: false,
            api_key_env: Some("OPENAI_API_KEY".to_string()),
            max_retries: 3,
            backoff_base_ms: 500,
            timeout_secs: 300,
        }
    }
}

impl ProviderConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |m: &str| Err(GatewayError::InvalidConfig(m.to_string()));
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return invalid("temperature must be >= 0");
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return invalid("top_p must be in (0, 1]");
        }
        if self.max_new_tokens == 0 {
            return invalid("max_new_tokens must be >= 1");
        }
        if self.endpoint_url.is_empty() {
            return invalid("endpoint_url is empty");
        }
        Ok(())
    }

    pub fn provider_kind(&self) -> ProviderKind {
        if self.structured_output {
            ProviderKind::Structured
        } else {
            ProviderKind::Open
        }
    }

    pub fn completions_url(&self) -> String {
        let base = self.endpoint_url.trim_end_matches('/');
        if base.ends_with("/chat/completions") {
            base.to_string()
        } else {
            format!("{base}/chat/completions")
        }
    }

    /// Delay before retry number `attempt` (0-based).
    pub fn backoff(&self, attempt: u32) -> Duration {
        Duration::from_millis(self.backoff_base_ms.saturating_mul(1u64 << attempt.min(20)))
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GatewayError {
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("environment variable {0} holding the API key is not set")]
    MissingApiKey(String),
    #[error("authentication rejected (HTTP {0})")]
    Auth(u16),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("retries exhausted after {attempts} attempts: {last}")]
    RetriesExhausted { attempts: u32, last: String },
    #[error("malformed provider payload: {0}")]
    MalformedPayload(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

/// Connection-level failure. Always considered transient.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("connection failed: {0}")]
    Connect(String),
    #[error("network error: {0}")]
    Network(String),
}

pub trait Transport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> Result<HttpReply, TransportError>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, GatewayError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        Ok(Self { client })
    }
}

impl Transport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &str,
    ) -> Result<HttpReply, TransportError> {
        let mut request = self
            .client
            .post(url)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(token) = bearer {
            request = request.bearer_auth(token);
        }
        let classify = |e: reqwest::Error| {
            if e.is_timeout() {
                TransportError::Timeout
            } else if e.is_connect() {
                TransportError::Connect(e.to_string())
            } else {
                TransportError::Network(e.to_string())
            }
        };
        let response = request.send().map_err(classify)?;
        let status = response.status().as_u16();
        let body = response.text().map_err(classify)?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: &'static str,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResponseFormat {
    #[serde(rename = "type")]
    pub kind: &'static str,
}

/// Request body for `POST /chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub top_p: f64,
    pub max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_format: Option<ResponseFormat>,
}

impl ChatRequest {
    pub fn new(bundle: &PromptBundle, config: &ProviderConfig) -> Self {
        Self {
            model: config.model_name.clone(),
            messages: vec![
                ChatMessage {
                    role: "system",
                    content: bundle.system_text.clone(),
                },
                ChatMessage {
                    role: "user",
                    content: bundle.user_text.clone(),
                },
            ],
            temperature: config.temperature,
            top_p: config.top_p,
            max_tokens: config.max_new_tokens,
            response_format: config.structured_output.then_some(ResponseFormat {
                kind: "json_object",
            }),
        }
    }
}

/// Chat completion client with bounded exponential-backoff retries on
/// 429, 5xx and connection failures.
pub struct ChatClient {
    config: ProviderConfig,
    api_key: Option<String>,
    transport: Box<dyn Transport>,
}

impl fmt::Debug for ChatClient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChatClient")
            .field("config", &self.config)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl ChatClient {
    /// Builds an HTTP client, reading the API key from the configured
    /// environment variable.
    pub fn from_env(config: ProviderConfig) -> Result<Self, GatewayError> {
        let transport = ReqwestTransport::new(Duration::from_secs(config.timeout_secs.max(1)))?;
        let api_key = match &config.api_key_env {
            Some(var) => Some(
                std::env::var(var)
                    .ok()
                    .filter(|k| !k.is_empty())
                    .ok_or_else(|| GatewayError::MissingApiKey(var.clone()))?,
            ),
            None => None,
        };
        Self::with_transport(config, api_key, Box::new(transport))
    }

    pub fn with_transport(
        config: ProviderConfig,
        api_key: Option<String>,
        transport: Box<dyn Transport>,
    ) -> Result<Self, GatewayError> {
        config.validate()?;
        Ok(Self {
            config,
            api_key,
            transport,
        })
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn complete(&self, bundle: &PromptBundle) -> Result<RawResponse, GatewayError> {
        let url = self.config.completions_url();
        let body = serde_json::to_string(&ChatRequest::new(bundle, &self.config))
            .map_err(|e| GatewayError::InvalidConfig(e.to_string()))?;
        let started = Instant::now();
        let mut last = String::new();

        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.config.backoff(attempt - 1));
            }
            match self
                .transport
                .post_json(&url, self.api_key.as_deref(), &body)
            {
                Ok(reply) if (200..300).contains(&reply.status) => {
                    let (text, finish_reason) = parse_completion(&reply.body)?;
                    return Ok(RawResponse {
                        call_index: bundle.call_index,
                        text,
                        finish_reason,
                        latency_ms: started.elapsed().as_millis() as u64,
                        error: None,
                    });
                }
                Ok(reply) if reply.status == 401 || reply.status == 403 => {
                    return Err(GatewayError::Auth(reply.status));
                }
                Ok(reply) if reply.status == 429 || reply.status >= 500 => {
                    last = format!("HTTP {}", reply.status);
                }
                Ok(reply) => {
                    return Err(GatewayError::Http {
                        status: reply.status,
                        body: truncate(&reply.body, 300),
                    });
                }
                Err(e) => last = e.to_string(),
            }
            tracing::debug!(call = bundle.call_index, attempt, %last, "transient failure");
        }
        Err(GatewayError::RetriesExhausted {
            attempts: self.config.max_retries + 1,
            last,
        })
    }
}

impl Provider for ChatClient {
    fn respond(&self, bundle: &PromptBundle) -> RawResponse {
        let started = Instant::now();
        self.complete(bundle).unwrap_or_else(|e| {
            tracing::warn!(call = bundle.call_index, error = %e, "call failed");
            RawResponse::failed(
                bundle.call_index,
                started.elapsed().as_millis() as u64,
                e.to_string(),
            )
        })
    }

    fn name(&self) -> String {
        self.config.model_name.clone()
    }
}

fn parse_completion(body: &str) -> Result<(String, FinishReason), GatewayError> {
    let value: Value =
        serde_json::from_str(body).map_err(|e| GatewayError::MalformedPayload(e.to_string()))?;
    let choice = value
        .get("choices")
        .and_then(Value::as_array)
        .and_then(|c| c.first())
        .ok_or_else(|| GatewayError::MalformedPayload("no choices".to_string()))?;
    let message = choice
        .get("message")
        .ok_or_else(|| GatewayError::MalformedPayload("choice without message".to_string()))?;
    let text = match message.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(Value::Null) | None => String::new(),
        Some(other) => {
            return Err(GatewayError::MalformedPayload(format!(
                "content is not a string: {other}"
            )))
        }
    };
    let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
        Some("length") => FinishReason::Length,
        _ => FinishReason::Stop,
    };
    Ok((text, finish_reason))
}

fn truncate(s: &str, max: usize) -> String {
    match s.char_indices().nth(max) {
        Some((i, _)) => format!("{}...", &s[..i]),
        None => s.to_string(),
    }
}
