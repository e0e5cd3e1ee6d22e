//! Client for an external embedding service.
//!
//! Wire contract: `POST {endpoint}/embed` with `{"texts": [..]}` answers
//! `{"vectors": [[..]..], "dim": n, "model": "..."}`; `GET {endpoint}/health`
//! answers `{"status": "ok", "model": "...", "dim": n}`. Vectors may come
//! back unnormalized.

use std::sync::Mutex;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{EmbedError, EmbeddingProvider, EmbeddingVector};
use crate::scalar::Scalar;

pub const DEFAULT_MAX_BATCH: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    /// Total attempts, including the first.
    pub attempts: u32,
    /// Delay before the second attempt; doubled before each further one.
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            attempts: 3,
            base_delay: Duration::from_millis(250),
        }
    }
}

pub(crate) fn agent() -> ureq::Agent {
    ureq::Agent::config_builder()
        .http_status_as_error(false)
        .timeout_global(Some(Duration::from_secs(60)))
        .proxy(None)
        .build()
        .into()
}

/// Send a request until it returns 200 or the policy runs out.
pub(crate) fn call_with_retry<T: DeserializeOwned>(
    agent: &ureq::Agent,
    url: &str,
    body: Option<&serde_json::Value>,
    retry: RetryPolicy,
) -> Result<T, EmbedError> {
    let attempts = retry.attempts.max(1);
    let mut delay = retry.base_delay;
    let mut last = String::new();
    for attempt in 1..=attempts {
        if attempt > 1 {
            std::thread::sleep(delay);
            delay *= 2;
        }
        let sent = match body {
            Some(b) => agent.post(url).send_json(b),
            None => agent.get(url).call(),
        };
        match sent {
            Ok(mut resp) if resp.status().as_u16() == 200 => {
                return resp.body_mut().read_json::<T>().map_err(|e| EmbedError::Protocol {
                    endpoint: url.to_string(),
                    detail: e.to_string(),
                });
            }
            Ok(mut resp) => {
                let text = resp.body_mut().read_to_string().unwrap_or_default();
                last = format!("HTTP {} {}", resp.status().as_u16(), text.trim());
            }
            Err(e) => last = e.to_string(),
        }
        log::warn!("{url}: attempt {attempt}/{attempts} failed: {last}");
    }
    Err(EmbedError::Unavailable {
        endpoint: url.to_string(),
        attempts,
        detail: last,
    })
}

#[derive(Debug, Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Debug, Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
    dim: usize,
    model: String,
}

#[derive(Debug, Deserialize)]
struct HealthResponse {
    dim: usize,
    model: String,
}

#[derive(Debug, Default)]
struct ServiceInfo {
    dim: Option<usize>,
    model: Option<String>,
}

/// Embedding provider backed by the HTTP service.
pub struct HttpProvider {
    endpoint: String,
    max_batch: usize,
    retry: RetryPolicy,
    agent: ureq::Agent,
    info: Mutex<ServiceInfo>,
}

impl HttpProvider {
    pub fn new(endpoint: impl Into<String>) -> Self {
        HttpProvider {
            endpoint: endpoint.into().trim_end_matches('/').to_string(),
            max_batch: DEFAULT_MAX_BATCH,
            retry: RetryPolicy::default(),
            agent: agent(),
            info: Mutex::new(ServiceInfo::default()),
        }
    }

    pub fn with_max_batch(mut self, max_batch: usize) -> Self {
        self.max_batch = max_batch.max(1);
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> &str {
        &self.endpoint
    }

    /// Model identifier reported by the service, once known.
    pub fn model(&self) -> Option<String> {
        self.info.lock().unwrap().model.clone()
    }

    fn record(&self, dim: usize, model: &str) -> Result<(), EmbedError> {
        let mut info = self.info.lock().unwrap();
        match info.dim {
            Some(expected) if expected != dim => return Err(EmbedError::DimMismatch { expected, found: dim }),
            _ => info.dim = Some(dim),
        }
        if info.model.is_none() {
            info.model = Some(model.to_string());
        }
        Ok(())
    }

    fn embed_chunk<S: Scalar>(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
        let url = format!("{}/embed", self.endpoint);
        let body = serde_json::to_value(EmbedRequest { texts }).expect("request serializes");
        let resp: EmbedResponse = call_with_retry(&self.agent, &url, Some(&body), self.retry)?;
        let protocol = |detail: String| EmbedError::Protocol {
            endpoint: url.clone(),
            detail,
        };
        if resp.vectors.len() != texts.len() {
            return Err(protocol(format!("{} vectors for {} texts", resp.vectors.len(), texts.len())));
        }
        self.record(resp.dim, &resp.model)?;
        resp.vectors
            .into_iter()
            .map(|v| {
                if v.len() != resp.dim {
                    return Err(EmbedError::DimMismatch {
                        expected: resp.dim,
                        found: v.len(),
                    });
                }
                EmbeddingVector::new(v.into_iter().map(S::lit).collect())
            })
            .collect()
    }
}

impl<S: Scalar> EmbeddingProvider<S> for HttpProvider {
    fn identity(&self) -> String {
        match self.model() {
            Some(model) => format!("http:{}#{model}", self.endpoint),
            None => format!("http:{}", self.endpoint),
        }
    }

    fn dim(&self) -> Result<usize, EmbedError> {
        if let Some(dim) = self.info.lock().unwrap().dim {
            return Ok(dim);
        }
        let url = format!("{}/health", self.endpoint);
        let health: HealthResponse = call_with_retry(&self.agent, &url, None, self.retry)?;
        self.record(health.dim, &health.model)?;
        Ok(health.dim)
    }

    fn embed_batch(&self, texts: &[String]) -> Result<Vec<EmbeddingVector<S>>, EmbedError> {
        let mut out = Vec::with_capacity(texts.len());
        for chunk in texts.chunks(self.max_batch) {
            out.extend(self.embed_chunk(chunk)?);
        }
        Ok(out)
    }
}

/// One-shot batch embedding against `endpoint`.
pub fn http_embed(texts: &[String], endpoint: &str) -> Result<Vec<EmbeddingVector<f64>>, EmbedError> {
    HttpProvider::new(endpoint).embed_batch(texts)
}
