//! Client for the common JSON chat-completions and embeddings endpoints.
//!
//! Requests (`Authorization: Bearer <key>`, `Content-Type: application/json`):
//!
//! ```text
//! POST {base_url}/chat/completions
//! {"model": "...", "messages": [{"role": "system", "content": "..."},
//!                               {"role": "user", "content": "..."}],
//!  "temperature": 0.1, "max_tokens": 512}
//! -> {"choices": [{"message": {"role": "assistant", "content": "..."}}]}
//!
//! POST {base_url}/embeddings
//! {"model": "...", "input": "..."}
//! -> {"data": [{"embedding": [0.01, ...]}]}
//! ```
//!
//! Connection errors, 429 and 5xx responses are retried with exponential
//! backoff; other 4xx responses fail at once.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{BackendConfig, BackendKind, ChatBackend, ChatRequest, EmbedBackend, GatewayError};

#[derive(Debug, Clone, PartialEq)]
pub struct HttpRequest {
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

/// Blocking POST. `Err` means no HTTP response was received.
pub trait HttpTransport: Send + Sync {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent }
    }
}

impl HttpTransport for UreqTransport {
    fn post(&self, request: &HttpRequest) -> Result<HttpResponse, String> {
        let mut req = self.agent.post(&request.url);
        for (k, v) in &request.headers {
            req = req.header(k, v);
        }
        let mut resp = req.send(request.body.as_str()).map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| e.to_string())?;
        Ok(HttpResponse { status, body })
    }
}

/// Counting semaphore bounding outstanding requests.
struct InFlight {
    limit: usize,
    used: Mutex<usize>,
    freed: Condvar,
}

impl InFlight {
    fn new(limit: usize) -> Self {
        Self {
            limit: limit.max(1),
            used: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> InFlightGuard<'_> {
        let mut used = self.used.lock().expect("in-flight lock poisoned");
        while *used >= self.limit {
            used = self.freed.wait(used).expect("in-flight lock poisoned");
        }
        *used += 1;
        InFlightGuard { sem: self }
    }
}

struct InFlightGuard<'a> {
    sem: &'a InFlight,
}

impl Drop for InFlightGuard<'_> {
    fn drop(&mut self) {
        let mut used = self.sem.used.lock().expect("in-flight lock poisoned");
        *used -= 1;
        self.sem.freed.notify_one();
    }
}

pub struct HttpBackend {
    base_url: String,
    api_key: String,
    embed_model: String,
    max_retries: u32,
    retry_base: Duration,
    in_flight: InFlight,
    transport: std::sync::Arc<dyn HttpTransport>,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct EmbeddingResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    embedding: Vec<f64>,
}

const MAX_BACKOFF: Duration = Duration::from_secs(30);

impl HttpBackend {
    pub fn new(
        cfg: &BackendConfig,
        api_key: String,
        transport: std::sync::Arc<dyn HttpTransport>,
    ) -> Self {
        Self {
            base_url: cfg
                .base_url
                .clone()
                .unwrap_or_default()
                .trim_end_matches('/')
                .to_string(),
            api_key,
            embed_model: cfg.embed_model.clone(),
            max_retries: cfg.max_retries,
            retry_base: Duration::from_millis(cfg.retry_base_ms),
            in_flight: InFlight::new(cfg.max_in_flight),
            transport,
        }
    }

    fn backoff(&self, retry: u32) -> Duration {
        self.retry_base
            .saturating_mul(1u32 << retry.min(16))
            .min(MAX_BACKOFF)
    }

    fn post_json(&self, path: &str, body: serde_json::Value) -> Result<String, GatewayError> {
        let request = HttpRequest {
            url: format!("{}/{path}", self.base_url),
            headers: vec![
                ("Authorization".into(), format!("Bearer {}", self.api_key)),
                ("Content-Type".into(), "application/json".into()),
            ],
            body: body.to_string(),
        };
        let mut attempts = 0;
        loop {
            attempts += 1;
            let outcome = {
                let _slot = self.in_flight.acquire();
                self.transport.post(&request)
            };
            let (retryable, message) = match outcome {
                Ok(resp) if (200..300).contains(&resp.status) => return Ok(resp.body),
                Ok(resp) => (
                    resp.status == 429 || resp.status >= 500,
                    format!(
                        "HTTP {} from {}: {}",
                        resp.status,
                        request.url,
                        truncate(&resp.body)
                    ),
                ),
                Err(e) => (true, format!("{}: {e}", request.url)),
            };
            if !retryable || attempts > self.max_retries {
                return Err(GatewayError::Transport { attempts, message });
            }
            let wait = self.backoff(attempts - 1);
            log::warn!("{message}; retrying in {wait:?}");
            std::thread::sleep(wait);
        }
    }
}

fn truncate(s: &str) -> &str {
    match s.char_indices().nth(200) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ChatBackend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut body = json!({
            "model": request.model_name,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.user},
            ],
            "temperature": request.temperature,
        });
        if let Some(max) = request.max_tokens {
            body["max_tokens"] = json!(max);
        }
        let text = self.post_json("chat/completions", body)?;
        let parsed: ChatResponse = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Backend(format!("malformed chat response: {e}")))?;
        let content = parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .unwrap_or_default();
        if content.trim().is_empty() {
            return Err(GatewayError::Backend("empty completion".into()));
        }
        Ok(content)
    }
}

impl EmbedBackend for HttpBackend {
    fn kind(&self) -> BackendKind {
        BackendKind::Http
    }

    fn model(&self) -> &str {
        &self.embed_model
    }

    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError> {
        let body = json!({"model": self.embed_model, "input": text});
        let raw = self.post_json("embeddings", body)?;
        let parsed: EmbeddingResponse = serde_json::from_str(&raw)
            .map_err(|e| GatewayError::Backend(format!("malformed embeddings response: {e}")))?;
        parsed
            .data
            .into_iter()
            .next()
            .map(|d| d.embedding)
            .ok_or_else(|| GatewayError::Backend("embeddings response has no data".into()))
    }
}
