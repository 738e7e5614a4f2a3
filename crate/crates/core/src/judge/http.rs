//! Hosted chat/completion endpoints configured from a backends file.

use std::path::Path;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{Backend, BackendError};
use super::{ModelSpec, RawResponse};
use crate::collection::tokenize;
use crate::prompting::RenderedPrompt;

const REQUEST_TIMEOUT: Duration = Duration::from_secs(120);
const ERROR_BODY_LIMIT: usize = 500;

/// Wire protocol of the endpoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RequestShape {
    #[default]
    Chat,
    Completion,
}

/// How the prompt maps onto chat roles: everything in one system message,
/// or instruction and examples as system with the evaluation pair as user.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum RoleMode {
    #[default]
    #[serde(rename = "system-only")]
    SystemOnly,
    #[serde(rename = "system+user")]
    SystemUser,
}

/// One endpoint in the backends config file. `auth` names the environment
/// variable holding the credential; credentials never live in files.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackendEndpoint {
    pub backend_id: String,
    pub base_url: String,
    #[serde(default)]
    pub auth: Option<String>,
    #[serde(default)]
    pub request_shape: RequestShape,
    #[serde(default)]
    pub role_mode: RoleMode,
}

/// Parse a backends config file: a JSON array of endpoints.
pub fn load_backends(path: &Path) -> Result<Vec<BackendEndpoint>, BackendError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        BackendError::Config(format!("cannot read backends file {}: {e}", path.display()))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        BackendError::Config(format!("backends file {}: {e}", path.display()))
    })
}

/// Blocking HTTP client for one configured endpoint.
pub struct HttpBackend {
    endpoint: BackendEndpoint,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    /// Resolve the credential (if the endpoint names one) and build the
    /// client. Fails fast when the environment variable is missing so no
    /// request is ever attempted without it.
    pub fn new(endpoint: BackendEndpoint) -> Result<Self, BackendError> {
        let api_key = match &endpoint.auth {
            Some(var) => Some(std::env::var(var).map_err(|_| BackendError::MissingCredential {
                var: var.clone(),
            })?),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(REQUEST_TIMEOUT)
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            endpoint,
            api_key,
            client,
        })
    }

    fn url(&self) -> String {
        let base = self.endpoint.base_url.trim_end_matches('/');
        match self.endpoint.request_shape {
            RequestShape::Chat => format!("{base}/chat/completions"),
            RequestShape::Completion => format!("{base}/completions"),
        }
    }

    fn request_body(&self, prompt: &RenderedPrompt, spec: &ModelSpec) -> Value {
        match self.endpoint.request_shape {
            RequestShape::Chat => {
                let messages = match self.endpoint.role_mode {
                    RoleMode::SystemOnly => {
                        json!([{ "role": "system", "content": prompt.text }])
                    }
                    RoleMode::SystemUser => {
                        let (system, user) = prompt.split_roles();
                        json!([
                            { "role": "system", "content": system },
                            { "role": "user", "content": user },
                        ])
                    }
                };
                json!({
                    "model": spec.model_name,
                    "messages": messages,
                    "temperature": spec.temperature,
                    "max_tokens": spec.max_output_tokens,
                })
            }
            RequestShape::Completion => json!({
                "model": spec.model_name,
                "prompt": prompt.text,
                "temperature": spec.temperature,
                "max_tokens": spec.max_output_tokens,
            }),
        }
    }

    fn extract_text(&self, body: &Value) -> Option<String> {
        let choice = body.get("choices")?.get(0)?;
        let text = match self.endpoint.request_shape {
            RequestShape::Chat => choice.get("message")?.get("content")?,
            RequestShape::Completion => choice.get("text")?,
        };
        text.as_str().map(str::to_string)
    }
}

fn usage_field(usage: &Value, names: [&str; 2]) -> Option<u64> {
    names.iter().find_map(|n| usage.get(n).and_then(Value::as_u64))
}

fn parse_retry_after_ms(response: &reqwest::blocking::Response) -> Option<u64> {
    let value = response.headers().get("retry-after")?.to_str().ok()?;
    let seconds: f64 = value.trim().parse().ok()?;
    Some((seconds * 1000.0) as u64)
}

impl Backend for HttpBackend {
    fn complete(&self, prompt: &RenderedPrompt, spec: &ModelSpec) -> Result<RawResponse, BackendError> {
        let started = Instant::now();
        let mut request = self
            .client
            .post(self.url())
            .json(&self.request_body(prompt, spec));
        if let Some(key) = &self.api_key {
            request = request.bearer_auth(key);
        }
        let response = request.send().map_err(|e| {
            if e.is_timeout() {
                BackendError::Timeout(e.to_string())
            } else {
                BackendError::Transport(e.to_string())
            }
        })?;

        let status = response.status().as_u16();
        if status == 429 {
            let retry_after_ms = parse_retry_after_ms(&response);
            return Err(BackendError::RateLimited { retry_after_ms });
        }
        if !response.status().is_success() {
            let mut body = response.text().unwrap_or_default();
            if body.len() > ERROR_BODY_LIMIT {
                let mut end = ERROR_BODY_LIMIT;
                while !body.is_char_boundary(end) {
                    end -= 1;
                }
                body.truncate(end);
            }
            return Err(BackendError::Http { status, body });
        }

        let latency_ms = started.elapsed().as_millis() as u64;
        let body: Value = response
            .json()
            .map_err(|e| BackendError::Transport(format!("unreadable response body: {e}")))?;
        let text = self.extract_text(&body).ok_or_else(|| {
            BackendError::Transport("response body has no completion text".into())
        })?;

        let usage = body.get("usage");
        let input = usage.and_then(|u| usage_field(u, ["prompt_tokens", "input_tokens"]));
        let output = usage.and_then(|u| usage_field(u, ["completion_tokens", "output_tokens"]));
        let (input_tokens, output_tokens, usage_estimated) = match (input, output) {
            (Some(i), Some(o)) => (i, o, false),
            // Endpoint reported no usage: estimate with local tokenization.
            _ => (
                tokenize(&prompt.text).len() as u64,
                tokenize(&text).len() as u64,
                true,
            ),
        };

        Ok(RawResponse {
            text,
            input_tokens,
            output_tokens,
            latency_ms,
            usage_estimated,
        })
    }
}
