//! Completion gateway over HTTP chat endpoints, a deterministic mock, and a
//! transcript replayer.
//!
//! [`Gateway`] wraps one backend with the cross-cutting pieces: response
//! cache, rate limit, retry with backoff, and transcript recording. It is
//! `Send + Sync` and meant to be shared behind an `Arc`.

mod cache;
mod clock;
mod http;
mod mock;
mod replay;
mod transcript;

use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use cache::ResponseCache;
pub use clock::{Backoff, Clock, ManualClock, RateLimiter, SystemClock};
pub use http::HttpChatBackend;
pub use mock::MockBackend;
pub use replay::ReplayBackend;
pub use transcript::{read_transcript, record_transcript, TranscriptEntry, TranscriptRecorder};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProviderKind {
    HttpChat,
    Mock,
    Replay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    pub endpoint: Option<String>,
    pub model_name: String,
    /// Name of the environment variable holding the bearer token. The token
    /// itself is never stored.
    pub auth_token_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
    pub requests_per_minute: Option<u32>,
    pub transcript: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
    /// Mock only.
    pub seed: u64,
}

impl Default for ProviderConfig {
    fn default() -> Self {
        ProviderConfig {
            kind: ProviderKind::Mock,
            endpoint: None,
            model_name: "mock".into(),
            auth_token_env: String::new(),
            timeout_secs: 60.0,
            max_retries: 3,
            requests_per_minute: None,
            transcript: None,
            cache_dir: None,
            seed: 0,
        }
    }
}

impl ProviderConfig {
    pub fn mock(seed: u64) -> Self {
        ProviderConfig { seed, ..Default::default() }
    }

    pub fn replay(transcript: impl Into<PathBuf>) -> Self {
        ProviderConfig {
            kind: ProviderKind::Replay,
            model_name: "replay".into(),
            transcript: Some(transcript.into()),
            ..Default::default()
        }
    }

    pub fn http(endpoint: impl Into<String>, model_name: impl Into<String>, auth_token_env: impl Into<String>) -> Self {
        ProviderConfig {
            kind: ProviderKind::HttpChat,
            endpoint: Some(endpoint.into()),
            model_name: model_name.into(),
            auth_token_env: auth_token_env.into(),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        let bad = |field: &str, why: &str| Err(ProviderError::InvalidConfig(format!("{field}: {why}")));
        if !self.timeout_secs.is_finite() || self.timeout_secs <= 0.0 {
            return bad("timeout_secs", "must be positive");
        }
        if self.requests_per_minute == Some(0) {
            return bad("requests_per_minute", "must be positive when set");
        }
        if self.model_name.trim().is_empty() {
            return bad("model_name", "must not be empty");
        }
        match self.kind {
            ProviderKind::HttpChat if self.endpoint.as_deref().is_none_or(|e| e.trim().is_empty()) => {
                bad("endpoint", "required for http_chat providers")
            }
            ProviderKind::Replay if self.transcript.is_none() => bad("transcript", "required for replay providers"),
            _ => Ok(()),
        }
    }

    /// Copy safe to persist: the endpoint's query string and userinfo, which
    /// some services use for keys, are removed.
    pub fn redacted(&self) -> ProviderConfig {
        let mut c = self.clone();
        if let Some(ep) = &c.endpoint {
            let mut s = ep.split(['?', '#']).next().unwrap_or("").to_string();
            if let Some(scheme_end) = s.find("://") {
                let rest = &s[scheme_end + 3..];
                if let Some(at) = rest.find('@').filter(|at| !rest[..*at].contains('/')) {
                    s = format!("{}{}", &s[..scheme_end + 3], &rest[at + 1..]);
                }
            }
            c.endpoint = Some(s);
        }
        c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub prompt: String,
    pub temperature: f64,
    pub max_output_tokens: u32,
    /// Semantic label such as `gen/q42/tm1/iter1/cand3`. Keys the replay
    /// transcript.
    pub request_tag: String,
}

pub const MAX_TEMPERATURE: f64 = 2.0;

impl CompletionRequest {
    pub fn new(request_tag: impl Into<String>, prompt: impl Into<String>, temperature: f64) -> Self {
        CompletionRequest { prompt: prompt.into(), temperature, max_output_tokens: 1024, request_tag: request_tag.into() }
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if !(0.0..=MAX_TEMPERATURE).contains(&self.temperature) {
            return Err(ProviderError::InvalidRequest(format!("temperature {} outside [0, {MAX_TEMPERATURE}]", self.temperature)));
        }
        if self.request_tag.trim().is_empty() {
            return Err(ProviderError::InvalidRequest("request_tag must not be empty".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(ProviderError::InvalidRequest("max_output_tokens must be positive".into()));
        }
        Ok(())
    }

    pub fn prompt_hash(&self) -> String {
        prompt_hash(&self.prompt)
    }
}

pub fn prompt_hash(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub provider_model: String,
    pub latency_ms: u64,
    pub from_cache: bool,
}

#[derive(Debug, Error)]
pub enum ProviderError {
    #[error("invalid provider config: {0}")]
    InvalidConfig(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("request {tag} failed after {attempts} attempt(s){}: {message}", .status.map(|s| format!(" (last status {s})")).unwrap_or_default())]
    Transport { tag: String, attempts: u32, status: Option<u16>, message: String },
    #[error("authentication rejected (status {status}): {message}")]
    Auth { status: u16, message: String },
    #[error("environment variable {0} holding the auth token is not set")]
    MissingToken(String),
    #[error("replay transcript has no response for request tag {0:?}")]
    ReplayMiss(String),
    #[error("replay transcript entry {tag:?} was recorded for a different prompt")]
    ReplayPromptMismatch { tag: String },
    #[error("transcript {path}: {message}")]
    Transcript { path: PathBuf, message: String },
    #[error("cache: {0}")]
    Cache(#[from] std::io::Error),
}

impl ProviderError {
    pub fn is_replay_miss(&self) -> bool {
        matches!(self, ProviderError::ReplayMiss(_))
    }
}

/// What a backend reports for one dispatched call.
#[derive(Debug)]
pub enum BackendError {
    /// Worth retrying: timeouts, connection failures, 429, 5xx.
    Retryable {
        status: Option<u16>,
        message: String,
    },
    Fatal(ProviderError),
}

pub struct BackendReply {
    pub text: String,
    pub model: String,
}

/// One source of completions. Implementations must be thread-safe.
pub trait CompletionBackend: Send + Sync {
    fn call(&self, request: &CompletionRequest) -> Result<BackendReply, BackendError>;

    /// True when calls leave the process; only those are rate limited.
    fn is_networked(&self) -> bool {
        false
    }
}

pub struct Gateway {
    config: ProviderConfig,
    backend: Box<dyn CompletionBackend>,
    cache: Option<ResponseCache>,
    limiter: Option<RateLimiter>,
    recorder: Option<Arc<TranscriptRecorder>>,
    clock: Arc<dyn Clock>,
    backoff: Backoff,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("config", &self.config.redacted()).finish_non_exhaustive()
    }
}

impl Gateway {
    /// Builds the backend named by `config.kind`.
    pub fn from_config(config: &ProviderConfig) -> Result<Self, ProviderError> {
        config.validate()?;
        let backend: Box<dyn CompletionBackend> = match config.kind {
            ProviderKind::Mock => Box::new(MockBackend::new(config.seed, config.model_name.clone())),
            ProviderKind::Replay => Box::new(ReplayBackend::load(config.transcript.as_deref().expect("validated"), &config.model_name)?),
            ProviderKind::HttpChat => Box::new(HttpChatBackend::new(config)?),
        };
        Gateway::with_backend(config.clone(), backend)
    }

    pub fn with_backend(config: ProviderConfig, backend: Box<dyn CompletionBackend>) -> Result<Self, ProviderError> {
        let cache = config.cache_dir.as_ref().map(ResponseCache::new).transpose()?;
        let limiter = config.requests_per_minute.map(|r| RateLimiter::new(r, Duration::from_secs(60)));
        Ok(Gateway { config, backend, cache, limiter, recorder: None, clock: Arc::new(SystemClock::new()), backoff: Backoff::default() })
    }

    pub fn with_recorder(mut self, recorder: Arc<TranscriptRecorder>) -> Self {
        self.recorder = Some(recorder);
        self
    }

    pub fn with_clock(mut self, clock: Arc<dyn Clock>) -> Self {
        self.clock = clock;
        self
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.config
    }

    pub fn model_name(&self) -> &str {
        &self.config.model_name
    }

    /// Cache key: model name, temperature bits, and prompt.
    pub fn cache_key(&self, request: &CompletionRequest) -> String {
        let mut h = Sha256::new();
        h.update(self.config.model_name.as_bytes());
        h.update([0]);
        h.update(request.temperature.to_bits().to_le_bytes());
        h.update([0]);
        h.update(request.prompt.as_bytes());
        hex::encode(h.finalize())
    }

    pub fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, ProviderError> {
        request.validate()?;
        let started = Instant::now();

        let key = self.cache.as_ref().map(|_| self.cache_key(request));
        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            if let Some(hit) = cache.get(key)? {
                let response = CompletionResponse {
                    text: hit.text,
                    provider_model: hit.model,
                    latency_ms: started.elapsed().as_millis() as u64,
                    from_cache: true,
                };
                self.record(request, &response);
                return Ok(response);
            }
        }

        let mut attempt = 0u32;
        let reply = loop {
            if self.backend.is_networked() {
                if let Some(limiter) = &self.limiter {
                    limiter.acquire(self.clock.as_ref());
                }
            }
            match self.backend.call(request) {
                Ok(reply) => break reply,
                Err(BackendError::Fatal(e)) => return Err(e),
                Err(BackendError::Retryable { status, message }) => {
                    if attempt >= self.config.max_retries {
                        return Err(ProviderError::Transport { tag: request.request_tag.clone(), attempts: attempt + 1, status, message });
                    }
                    let delay = self.backoff.delay(attempt, rand::random::<f64>());
                    log::warn!("{}: attempt {} failed ({message}); retrying in {:?}", request.request_tag, attempt + 1, delay);
                    self.clock.sleep(delay);
                    attempt += 1;
                }
            }
        };

        if let (Some(cache), Some(key)) = (&self.cache, &key) {
            cache.put(key, &reply.text, &reply.model)?;
        }
        let response = CompletionResponse {
            text: reply.text,
            provider_model: reply.model,
            latency_ms: started.elapsed().as_millis() as u64,
            from_cache: false,
        };
        self.record(request, &response);
        Ok(response)
    }

    fn record(&self, request: &CompletionRequest, response: &CompletionResponse) {
        if let Some(rec) = &self.recorder {
            rec.record(TranscriptEntry {
                request_tag: request.request_tag.clone(),
                prompt_hash: request.prompt_hash(),
                temperature: request.temperature,
                response_text: response.text.clone(),
                model: Some(response.provider_model.clone()),
            });
        }
    }
}
