//! Chat-completion and text-embedding access behind two narrow traits.
//!
//! [`Gateway`] fronts a chat backend and an embedding backend with a
//! content-addressed response cache. Backends are either the HTTP client in
//! [`http`] or the pure offline doubles in [`mock`].

pub mod cache;
pub mod http;
pub mod mock;

use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use cache::{cache_key, ResponseCache};
pub use http::{HttpBackend, HttpRequest, HttpResponse, HttpTransport, UreqTransport};
pub use mock::{mock_chat_rule, mock_embed_rule, MockChat, MockEmbed, MOCK_DIM};

pub const DEFAULT_TEMPERATURE: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("backend configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("backend error: {0}")]
    Backend(String),
    #[error("cache: {0}")]
    Cache(String),
}

impl GatewayError {
    pub fn is_transport(&self) -> bool {
        matches!(self, GatewayError::Transport { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system: String,
    pub user: String,
    pub temperature: f64,
    pub model_name: String,
    pub max_tokens: Option<u32>,
}

impl ChatRequest {
    pub fn new(system: impl Into<String>, user: impl Into<String>) -> Self {
        Self {
            system: system.into(),
            user: user.into(),
            temperature: DEFAULT_TEMPERATURE,
            model_name: String::new(),
            max_tokens: None,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user.trim().is_empty() {
            return Err(GatewayError::Input(
                "chat request has an empty user message".into(),
            ));
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return Err(GatewayError::Input(format!(
                "temperature {} outside [0, 2]",
                self.temperature
            )));
        }
        if self.max_tokens == Some(0) {
            return Err(GatewayError::Input("max_tokens must be positive".into()));
        }
        Ok(())
    }
}

/// A unit-length embedding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    values: Vec<f64>,
}

impl EmbeddingVector {
    /// L2-normalizes `values`. Fails on empty, zero or non-finite input.
    pub fn normalized(mut values: Vec<f64>) -> Result<Self, GatewayError> {
        if values.is_empty() {
            return Err(GatewayError::Backend("empty embedding".into()));
        }
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(GatewayError::Backend(format!(
                "embedding has norm {norm}; cannot normalize"
            )));
        }
        for v in &mut values {
            *v /= norm;
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Mock,
}

impl BackendKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BackendKind::Http => "http",
            BackendKind::Mock => "mock",
        }
    }
}

impl FromStr for BackendKind {
    type Err = GatewayError;

    fn from_str(s: &str) -> Result<Self, GatewayError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "http" => Ok(BackendKind::Http),
            "mock" => Ok(BackendKind::Mock),
            _ => Err(GatewayError::Config(format!("unknown backend {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendConfig {
    pub kind: BackendKind,
    pub base_url: Option<String>,
    pub api_key_env: Option<String>,
    pub chat_model: String,
    pub embed_model: String,
    pub timeout_secs: u64,
    /// Retries after the first attempt.
    pub max_retries: u32,
    pub max_in_flight: usize,
    /// First backoff delay; doubles per retry.
    pub retry_base_ms: u64,
}

impl Default for BackendConfig {
    fn default() -> Self {
        Self {
            kind: BackendKind::Mock,
            base_url: None,
            api_key_env: None,
            chat_model: "gpt-4o-mini".into(),
            embed_model: "text-embedding-3-small".into(),
            timeout_secs: 60,
            max_retries: 3,
            max_in_flight: 4,
            retry_base_ms: 500,
        }
    }
}

impl BackendConfig {
    pub fn mock() -> Self {
        Self::default()
    }

    /// Model names as seen by the cache and reports.
    pub fn effective_models(&self) -> (String, String) {
        match self.kind {
            BackendKind::Mock => (mock::MOCK_CHAT_MODEL.into(), mock::MOCK_EMBED_MODEL.into()),
            BackendKind::Http => (self.chat_model.clone(), self.embed_model.clone()),
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.max_in_flight == 0 {
            return Err(GatewayError::Config(
                "max_in_flight must be at least 1".into(),
            ));
        }
        if self.kind == BackendKind::Http {
            if self.base_url.as_deref().is_none_or(str::is_empty) {
                return Err(GatewayError::Config(
                    "http backend requires base_url".into(),
                ));
            }
            if self.api_key_env.as_deref().is_none_or(str::is_empty) {
                return Err(GatewayError::Config(
                    "http backend requires api_key_env".into(),
                ));
            }
        }
        Ok(())
    }
}

pub trait ChatBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn complete(&self, request: &ChatRequest) -> Result<String, GatewayError>;
}

pub trait EmbedBackend: Send + Sync {
    fn kind(&self) -> BackendKind;
    fn model(&self) -> &str;
    /// Raw (not necessarily normalized) embedding of `text`.
    fn embed_raw(&self, text: &str) -> Result<Vec<f64>, GatewayError>;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct GatewayStats {
    pub chat_backend_calls: usize,
    pub embed_backend_calls: usize,
    pub cache_hits: usize,
}

pub struct Gateway {
    chat: Arc<dyn ChatBackend>,
    embed: Arc<dyn EmbedBackend>,
    chat_model: String,
    cache: ResponseCache,
    chat_calls: AtomicUsize,
    embed_calls: AtomicUsize,
    hits: AtomicUsize,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("chat_kind", &self.chat.kind())
            .field("chat_model", &self.chat_model)
            .field("embed_model", &self.embed.model())
            .finish()
    }
}

impl Gateway {
    pub fn new(
        chat: Arc<dyn ChatBackend>,
        embed: Arc<dyn EmbedBackend>,
        chat_model: impl Into<String>,
        cache: ResponseCache,
    ) -> Self {
        Self {
            chat,
            embed,
            chat_model: chat_model.into(),
            cache,
            chat_calls: AtomicUsize::new(0),
            embed_calls: AtomicUsize::new(0),
            hits: AtomicUsize::new(0),
        }
    }

    /// Mock chat and embedding backends with an in-memory cache.
    pub fn mock() -> Self {
        Self::new(
            Arc::new(MockChat),
            Arc::new(MockEmbed),
            mock::MOCK_CHAT_MODEL,
            ResponseCache::in_memory(),
        )
    }

    /// Builds the gateway described by `cfg`. For the HTTP backend the API
    /// key is read from the configured environment variable here, so missing
    /// credentials fail before any work starts.
    pub fn from_config(
        cfg: &BackendConfig,
        cache_dir: Option<&Path>,
    ) -> Result<Self, GatewayError> {
        cfg.validate()?;
        let cache = match cache_dir {
            Some(dir) => ResponseCache::on_disk(dir),
            None => ResponseCache::in_memory(),
        };
        match cfg.kind {
            BackendKind::Mock => Ok(Self::new(
                Arc::new(MockChat),
                Arc::new(MockEmbed),
                mock::MOCK_CHAT_MODEL,
                cache,
            )),
            BackendKind::Http => {
                let env = cfg.api_key_env.as_deref().unwrap_or_default();
                let key = std::env::var(env).map_err(|_| {
                    GatewayError::Config(format!("environment variable {env} is not set"))
                })?;
                let transport = Arc::new(UreqTransport::new(std::time::Duration::from_secs(
                    cfg.timeout_secs,
                )));
                let backend = Arc::new(HttpBackend::new(cfg, key, transport));
                Ok(Self::new(
                    backend.clone(),
                    backend,
                    cfg.chat_model.clone(),
                    cache,
                ))
            }
        }
    }

    pub fn chat_model(&self) -> &str {
        &self.chat_model
    }

    pub fn embed_model(&self) -> &str {
        self.embed.model()
    }

    /// Sends a chat request and returns the assistant text. Responses are
    /// cached by (backend kind, model, temperature, system and user text).
    pub fn chat(&self, request: &ChatRequest) -> Result<String, GatewayError> {
        let mut request = request.clone();
        if request.model_name.is_empty() {
            request.model_name = self.chat_model.clone();
        }
        request.validate()?;
        let prompt = format!(
            "temperature={}\u{0}max_tokens={:?}\u{0}{}\u{0}{}",
            request.temperature, request.max_tokens, request.system, request.user
        );
        let key = cache_key(self.chat.kind().as_str(), &request.model_name, &prompt);
        let (text, hit) = self.cache.get_or_insert_text(&key, || {
            self.chat_calls.fetch_add(1, Ordering::Relaxed);
            let text = self.chat.complete(&request)?;
            if text.trim().is_empty() {
                return Err(GatewayError::Backend("empty completion".into()));
            }
            Ok(text)
        })?;
        if hit {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok(text)
    }

    /// Unit-norm embedding of `text`, cached by (backend kind, model, text).
    pub fn embed(&self, text: &str) -> Result<EmbeddingVector, GatewayError> {
        if text.trim().is_empty() {
            return Err(GatewayError::Input("cannot embed empty text".into()));
        }
        let key = cache_key(self.embed.kind().as_str(), self.embed.model(), text);
        let (values, hit) = self.cache.get_or_insert_embedding(&key, || {
            self.embed_calls.fetch_add(1, Ordering::Relaxed);
            let raw = self.embed.embed_raw(text)?;
            Ok(EmbeddingVector::normalized(raw)?.values)
        })?;
        if hit {
            self.hits.fetch_add(1, Ordering::Relaxed);
        }
        Ok(EmbeddingVector { values })
    }

    pub fn stats(&self) -> GatewayStats {
        GatewayStats {
            chat_backend_calls: self.chat_calls.load(Ordering::Relaxed),
            embed_backend_calls: self.embed_calls.load(Ordering::Relaxed),
            cache_hits: self.hits.load(Ordering::Relaxed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embed_is_cached_and_unit_norm() {
        let gw = Gateway::mock();
        let a = gw.embed("a tower crane lifting steel").unwrap();
        let b = gw.embed("a tower crane lifting steel").unwrap();
        assert_eq!(a, b);
        assert!((a.norm() - 1.0).abs() < 1e-6);
        let s = gw.stats();
        assert_eq!((s.embed_backend_calls, s.cache_hits), (1, 1));
    }

    #[test]
    fn empty_text_is_input_error() {
        let gw = Gateway::mock();
        assert!(matches!(gw.embed("   "), Err(GatewayError::Input(_))));
        let req = ChatRequest::new("sys", "");
        assert!(matches!(gw.chat(&req), Err(GatewayError::Input(_))));
    }

    #[test]
    fn chat_default_temperature() {
        assert_eq!(ChatRequest::new("s", "u").temperature, 0.1);
    }

    #[test]
    fn mock_chat_is_deterministic() {
        let gw = Gateway::mock();
        let req = ChatRequest::new(
            "sys",
            "Captions:\n- crane crane crane crane crane\n- sky sky",
        );
        let a = gw.chat(&req).unwrap();
        assert!(a.starts_with("Images of crane"), "{a}");
        assert_eq!(a, Gateway::mock().chat(&req).unwrap());
    }

    #[test]
    fn http_config_requires_url_key_and_env() {
        let mut cfg = BackendConfig {
            kind: BackendKind::Http,
            ..BackendConfig::default()
        };
        assert!(matches!(
            Gateway::from_config(&cfg, None),
            Err(GatewayError::Config(_))
        ));
        cfg.base_url = Some("http://127.0.0.1:9".into());
        cfg.api_key_env = Some("CLUSTERSCRIBE_TEST_SURELY_UNSET_KEY".into());
        let err = Gateway::from_config(&cfg, None).unwrap_err();
        assert!(
            err.to_string()
                .contains("CLUSTERSCRIBE_TEST_SURELY_UNSET_KEY"),
            "{err}"
        );
    }

    #[test]
    fn zero_vector_cannot_be_normalized() {
        assert!(EmbeddingVector::normalized(vec![0.0, 0.0]).is_err());
        let v = EmbeddingVector::normalized(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.values(), &[0.6, 0.8]);
    }
}
