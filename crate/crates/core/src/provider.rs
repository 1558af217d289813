//! Client for OpenAI-compatible embedding and chat-completion endpoints.
//!
//! Requests are retried on transport failures, timeouts, 429 and 5xx, up to
//! three attempts with exponential backoff.

use std::time::Duration;

use serde::Serialize;
use serde_json::{json, Value};

pub const BASE_URL_ENV: &str = "RAGTUNER_BASE_URL";
pub const API_KEY_ENV: &str = "RAGTUNER_API_KEY";

const BODY_EXCERPT: usize = 200;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProviderError {
    #[error("provider returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("provider request timed out")]
    Timeout,
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("provider not configured: {0}")]
    MissingConfig(String),
}

#[derive(Debug, Clone)]
pub struct EndpointConfig {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
    pub timeout: Duration,
    pub batch_size: usize,
    pub max_in_flight: usize,
    pub max_attempts: usize,
    /// Delay before the second attempt; doubles after each failure.
    pub backoff: Duration,
}

impl EndpointConfig {
    pub fn new(base_url: &str, api_key: &str, model: &str) -> Self {
        Self {
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key: api_key.to_string(),
            model: model.to_string(),
            timeout: Duration::from_secs(60),
            batch_size: 32,
            max_in_flight: 4,
            max_attempts: 3,
            backoff: Duration::from_millis(500),
        }
    }

    /// Reads the base URL and key from the environment.
    pub fn from_env(model: &str) -> Result<Self, ProviderError> {
        let base = std::env::var(BASE_URL_ENV)
            .map_err(|_| ProviderError::MissingConfig(format!("{BASE_URL_ENV} is not set")))?;
        let key = std::env::var(API_KEY_ENV)
            .map_err(|_| ProviderError::MissingConfig(format!("{API_KEY_ENV} is not set")))?;
        Ok(Self::new(&base, &key, model))
    }

    fn agent(&self) -> ureq::Agent {
        ureq::Agent::config_builder()
            .timeout_global(Some(self.timeout))
            .http_status_as_error(false)
            .build()
            .into()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

fn excerpt(body: &str) -> String {
    body.chars().take(BODY_EXCERPT).collect()
}

fn post_json(agent: &ureq::Agent, cfg: &EndpointConfig, path: &str, body: &Value) -> Result<Value, ProviderError> {
    let url = format!("{}/{path}", cfg.base_url);
    let mut delay = cfg.backoff;
    let attempts = cfg.max_attempts.max(1);
    let mut last = ProviderError::Transport("no attempt made".into());
    for attempt in 1..=attempts {
        let outcome = agent
            .post(&url)
            .header("Authorization", &format!("Bearer {}", cfg.api_key))
            .send_json(body);
        let transient = match outcome {
            Ok(resp) => {
                let status = resp.status().as_u16();
                let text = resp
                    .into_body()
                    .read_to_string()
                    .map_err(|e| ProviderError::Transport(e.to_string()))?;
                if (200..300).contains(&status) {
                    return serde_json::from_str(&text)
                        .map_err(|e| ProviderError::Malformed(e.to_string()));
                }
                last = ProviderError::Http { status, body: excerpt(&text) };
                status == 429 || status >= 500
            }
            Err(ureq::Error::Timeout(_)) => {
                last = ProviderError::Timeout;
                true
            }
            Err(e) => {
                last = ProviderError::Transport(e.to_string());
                true
            }
        };
        if !transient {
            break;
        }
        if attempt < attempts {
            log::warn!("{url}: attempt {attempt} failed ({last}), retrying in {delay:?}");
            std::thread::sleep(delay);
            delay *= 2;
        }
    }
    Err(last)
}

fn embed_batch(agent: &ureq::Agent, cfg: &EndpointConfig, batch: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
    let body = json!({"model": cfg.model, "input": batch});
    let resp = post_json(agent, cfg, "embeddings", &body)?;
    let data = resp
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| ProviderError::Malformed("missing `data` array".into()))?;
    if data.len() != batch.len() {
        return Err(ProviderError::Malformed(format!(
            "expected {} embeddings, got {}",
            batch.len(),
            data.len()
        )));
    }
    let mut out: Vec<Option<Vec<f64>>> = vec![None; batch.len()];
    for (pos, item) in data.iter().enumerate() {
        let index = item
            .get("index")
            .and_then(Value::as_u64)
            .map(|i| i as usize)
            .unwrap_or(pos);
        let vector: Vec<f64> = item
            .get("embedding")
            .and_then(Value::as_array)
            .and_then(|a| a.iter().map(Value::as_f64).collect())
            .ok_or_else(|| ProviderError::Malformed("embedding is not a number array".into()))?;
        let slot = out
            .get_mut(index)
            .ok_or_else(|| ProviderError::Malformed(format!("embedding index {index} out of range")))?;
        *slot = Some(vector);
    }
    out.into_iter()
        .map(|v| v.ok_or_else(|| ProviderError::Malformed("missing embedding index".into())))
        .collect()
}

/// One vector per input, in input order. Batches of at most
/// `cfg.batch_size` are sent with up to `cfg.max_in_flight` concurrent
/// requests.
pub fn embed_remote(texts: &[String], cfg: &EndpointConfig) -> Result<Vec<Vec<f64>>, ProviderError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let agent = cfg.agent();
    let batches: Vec<&[String]> = texts.chunks(cfg.batch_size.max(1)).collect();
    let mut out = Vec::with_capacity(texts.len());
    for wave in batches.chunks(cfg.max_in_flight.max(1)) {
        let results: Vec<Result<Vec<Vec<f64>>, ProviderError>> = std::thread::scope(|s| {
            let handles: Vec<_> = wave
                .iter()
                .map(|batch| {
                    let agent = &agent;
                    s.spawn(move || embed_batch(agent, cfg, batch))
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("embedding worker panicked"))
                .collect()
        });
        for r in results {
            out.extend(r?);
        }
    }
    Ok(out)
}

/// A single chat completion at temperature 0; returns the first choice.
pub fn chat_completion(messages: &[ChatMessage], cfg: &EndpointConfig) -> Result<String, ProviderError> {
    let body = json!({"model": cfg.model, "messages": messages, "temperature": 0});
    let resp = post_json(&cfg.agent(), cfg, "chat/completions", &body)?;
    resp.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Malformed("missing choices[0].message.content".into()))
}
