//! The backend abstraction plus deterministic test and replay backends.

use std::collections::HashMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;
use std::sync::atomic::{AtomicI64, AtomicU32, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use super::{ModelSpec, RawResponse};
use crate::collection::tokenize;
use crate::prompting::RenderedPrompt;

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("rate limited (retry after {retry_after_ms:?} ms)")]
    RateLimited { retry_after_ms: Option<u64> },
    #[error("request timed out: {0}")]
    Timeout(String),
    #[error("credential environment variable {var} is not set")]
    MissingCredential { var: String },
    #[error("no recorded response for prompt hash {prompt_hash}")]
    MissingFixture { prompt_hash: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

impl BackendError {
    /// Rate limits, timeouts, transport drops, and server errors are worth
    /// retrying; auth and client errors are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            BackendError::Transport(_) | BackendError::Timeout(_) | BackendError::RateLimited { .. } => true,
            BackendError::Http { status, .. } => *status >= 500,
            BackendError::MissingCredential { .. }
            | BackendError::MissingFixture { .. }
            | BackendError::Config(_) => false,
        }
    }

    /// Endpoint-suggested minimum wait before retrying.
    pub fn suggested_delay(&self) -> Duration {
        match self {
            BackendError::RateLimited {
                retry_after_ms: Some(ms),
            } => Duration::from_millis(*ms),
            _ => Duration::ZERO,
        }
    }
}

/// A model endpoint: renders a completion for a prompt.
///
/// Implementations must be safe for concurrent calls; the runner bounds
/// in-flight requests and serializes admission through a rate limiter.
pub trait Backend: Send + Sync {
    fn complete(&self, prompt: &RenderedPrompt, spec: &ModelSpec) -> Result<RawResponse, BackendError>;

    /// Deterministic backends (mock, replay) always return the same
    /// response for the same prompt; the runner then emits fixed
    /// timestamps so whole run files are reproducible.
    fn is_deterministic(&self) -> bool {
        false
    }
}

/// Hex SHA-256 of the rendered prompt text; the key of record/replay
/// fixtures.
pub fn prompt_hash(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn word_count(text: &str) -> u64 {
    tokenize(text).len() as u64
}

/// One line of a record/replay fixture file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub prompt_hash: String,
    pub response_text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
}

/// Test backend mapping (query, document) pairs to canned response text.
/// Unknown pairs get the default response when one is configured,
/// otherwise an error. Instrumented with call and concurrency counters.
pub struct MockBackend {
    responses: HashMap<(String, String), String>,
    default_response: Option<String>,
    delay: Option<Duration>,
    calls: AtomicU32,
    in_flight: AtomicI64,
    max_in_flight: AtomicI64,
}

impl MockBackend {
    pub fn new(responses: HashMap<(String, String), String>) -> Self {
        MockBackend {
            responses,
            default_response: None,
            delay: None,
            calls: AtomicU32::new(0),
            in_flight: AtomicI64::new(0),
            max_in_flight: AtomicI64::new(0),
        }
    }

    pub fn with_default(response: &str) -> Self {
        let mut backend = Self::new(HashMap::new());
        backend.default_response = Some(response.to_string());
        backend
    }

    pub fn set_default(mut self, response: &str) -> Self {
        self.default_response = Some(response.to_string());
        self
    }

    /// Sleep this long inside each call; lets tests observe concurrency.
    pub fn set_delay(mut self, delay: Duration) -> Self {
        self.delay = Some(delay);
        self
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn max_in_flight(&self) -> i64 {
        self.max_in_flight.load(Ordering::SeqCst)
    }
}

impl Backend for MockBackend {
    fn complete(&self, prompt: &RenderedPrompt, _spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let now = self.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
        self.max_in_flight.fetch_max(now, Ordering::SeqCst);
        if let Some(delay) = self.delay {
            std::thread::sleep(delay);
        }
        let key = (prompt.query.clone(), prompt.document.clone());
        let text = self
            .responses
            .get(&key)
            .or(self.default_response.as_ref())
            .cloned();
        self.in_flight.fetch_sub(1, Ordering::SeqCst);
        match text {
            Some(text) => Ok(RawResponse {
                input_tokens: word_count(&prompt.text),
                output_tokens: word_count(&text),
                latency_ms: 0,
                usage_estimated: false,
                text,
            }),
            None => Err(BackendError::Config(format!(
                "no fixture for query {:?}",
                prompt.query
            ))),
        }
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Test backend that replays a fixed sequence of results, one per call.
pub struct ScriptedBackend {
    script: Mutex<std::collections::VecDeque<Result<String, BackendError>>>,
    calls: AtomicU32,
}

impl ScriptedBackend {
    pub fn new(script: Vec<Result<String, BackendError>>) -> Self {
        ScriptedBackend {
            script: Mutex::new(script.into()),
            calls: AtomicU32::new(0),
        }
    }

    pub fn calls(&self) -> u32 {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Backend for ScriptedBackend {
    fn complete(&self, prompt: &RenderedPrompt, _spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let next = self
            .script
            .lock()
            .unwrap()
            .pop_front()
            .unwrap_or(Err(BackendError::Config("script exhausted".into())));
        next.map(|text| RawResponse {
            input_tokens: word_count(&prompt.text),
            output_tokens: word_count(&text),
            latency_ms: 0,
            usage_estimated: false,
            text,
        })
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Deterministic stand-in for a hosted model: serves recorded responses
/// keyed by prompt hash from a line-delimited JSON fixture file.
pub struct ReplayBackend {
    entries: HashMap<String, FixtureEntry>,
}

impl ReplayBackend {
    pub fn new(entries: Vec<FixtureEntry>) -> Self {
        let entries = entries.into_iter().map(|e| (e.prompt_hash.clone(), e)).collect();
        ReplayBackend { entries }
    }

    pub fn load(path: &Path) -> Result<Self, BackendError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            BackendError::Config(format!("cannot read fixture {}: {e}", path.display()))
        })?;
        let mut entries = Vec::new();
        for (idx, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: FixtureEntry = serde_json::from_str(line).map_err(|e| {
                BackendError::Config(format!(
                    "fixture {} line {}: {e}",
                    path.display(),
                    idx + 1
                ))
            })?;
            entries.push(entry);
        }
        Ok(Self::new(entries))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

impl Backend for ReplayBackend {
    fn complete(&self, prompt: &RenderedPrompt, _spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        let hash = prompt_hash(&prompt.text);
        match self.entries.get(&hash) {
            Some(entry) => Ok(RawResponse {
                text: entry.response_text.clone(),
                input_tokens: entry.input_tokens,
                output_tokens: entry.output_tokens,
                latency_ms: 0,
                usage_estimated: false,
            }),
            None => Err(BackendError::MissingFixture { prompt_hash: hash }),
        }
    }

    fn is_deterministic(&self) -> bool {
        true
    }
}

/// Wraps a live backend and appends every successful call to a fixture
/// file that [`ReplayBackend`] can later serve.
pub struct RecordingBackend<B> {
    inner: B,
    sink: Mutex<std::fs::File>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn create(inner: B, path: &Path) -> Result<Self, BackendError> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| {
                BackendError::Config(format!("cannot open fixture {}: {e}", path.display()))
            })?;
        Ok(RecordingBackend {
            inner,
            sink: Mutex::new(file),
        })
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn complete(&self, prompt: &RenderedPrompt, spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        let response = self.inner.complete(prompt, spec)?;
        let entry = FixtureEntry {
            prompt_hash: prompt_hash(&prompt.text),
            response_text: response.text.clone(),
            input_tokens: response.input_tokens,
            output_tokens: response.output_tokens,
        };
        let line = serde_json::to_string(&entry).expect("fixture entry serializes");
        let mut sink = self.sink.lock().unwrap();
        writeln!(sink, "{line}")
            .and_then(|_| sink.flush())
            .map_err(|e| BackendError::Config(format!("fixture write failed: {e}")))?;
        Ok(response)
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}

/// Serializes request admission and enforces a minimum spacing between
/// admissions across all worker threads.
pub struct RateLimiter {
    min_interval: Duration,
    next_free: Mutex<Option<Instant>>,
}

impl RateLimiter {
    pub fn new(min_interval: Duration) -> Self {
        RateLimiter {
            min_interval,
            next_free: Mutex::new(None),
        }
    }

    /// Block until this caller's admission slot arrives.
    pub fn acquire(&self) {
        let wait_until = {
            let mut next_free = self.next_free.lock().unwrap();
            let now = Instant::now();
            let slot = match *next_free {
                Some(t) if t > now => t,
                _ => now,
            };
            *next_free = Some(slot + self.min_interval);
            slot
        };
        let now = Instant::now();
        if wait_until > now {
            std::thread::sleep(wait_until - now);
        }
    }
}

/// Backend decorator that passes every call through a shared rate limiter.
pub struct RateLimitedBackend<B> {
    inner: B,
    limiter: RateLimiter,
}

impl<B: Backend> RateLimitedBackend<B> {
    pub fn new(inner: B, min_interval: Duration) -> Self {
        RateLimitedBackend {
            inner,
            limiter: RateLimiter::new(min_interval),
        }
    }
}

impl<B: Backend> Backend for RateLimitedBackend<B> {
    fn complete(&self, prompt: &RenderedPrompt, spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        self.limiter.acquire();
        self.inner.complete(prompt, spec)
    }

    fn is_deterministic(&self) -> bool {
        self.inner.is_deterministic()
    }
}

impl<B: Backend + ?Sized> Backend for &B {
    fn complete(&self, prompt: &RenderedPrompt, spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        (**self).complete(prompt, spec)
    }

    fn is_deterministic(&self) -> bool {
        (**self).is_deterministic()
    }
}
