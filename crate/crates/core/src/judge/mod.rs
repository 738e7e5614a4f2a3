//! Model invocation and robust parsing of JSON relevance verdicts.

mod backend;
mod http;
mod parse;

pub use backend::{
    prompt_hash, Backend, BackendError, FixtureEntry, MockBackend, RateLimitedBackend,
    RecordingBackend, ReplayBackend, ScriptedBackend,
};
pub use http::{load_backends, BackendEndpoint, HttpBackend, RequestShape, RoleMode};
pub use parse::{parse_judgment, ParseJudgmentError, ParsedJudgment};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompting::{render_prompt_budgeted, PromptError, PromptTemplate};

/// What to run: model identity, endpoint reference, and sampling settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_name: String,
    pub backend_id: String,
    pub temperature: f64,
    pub max_output_tokens: u64,
}

impl ModelSpec {
    pub fn validate(&self) -> Result<(), JudgeError> {
        if !(self.temperature >= 0.0) || !self.temperature.is_finite() {
            return Err(JudgeError::InvalidSpec(format!(
                "temperature {} must be finite and >= 0",
                self.temperature
            )));
        }
        if self.max_output_tokens == 0 {
            return Err(JudgeError::InvalidSpec("max_output_tokens must be >= 1".into()));
        }
        Ok(())
    }
}

/// Raw model reply plus usage as reported by the endpoint. When the
/// endpoint reports no usage, counts are estimated by local tokenization
/// and flagged.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub usage_estimated: bool,
}

/// Retry schedule: delays start at `backoff_initial_ms` and grow by
/// `backoff_multiplier` per attempt, so they never decrease.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub backoff_initial_ms: u64,
    pub backoff_multiplier: f64,
}

impl RetryPolicy {
    pub fn new(max_attempts: u32, backoff_initial_ms: u64, backoff_multiplier: f64) -> Result<Self, JudgeError> {
        if max_attempts == 0 {
            return Err(JudgeError::InvalidSpec("max_attempts must be >= 1".into()));
        }
        if !(backoff_multiplier >= 1.0) {
            return Err(JudgeError::InvalidSpec("backoff_multiplier must be >= 1".into()));
        }
        Ok(RetryPolicy {
            max_attempts,
            backoff_initial_ms,
            backoff_multiplier,
        })
    }

    /// Delay before the retry following `attempt` (1-based).
    pub fn delay_after(&self, attempt: u32) -> Duration {
        let ms = self.backoff_initial_ms as f64 * self.backoff_multiplier.powi(attempt as i32 - 1);
        Duration::from_millis(ms as u64)
    }
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_attempts: 3,
            backoff_initial_ms: 1000,
            backoff_multiplier: 2.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
}

/// Token and timing totals accumulated across every attempt for one pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AttemptTotals {
    pub attempts: u32,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub latency_ms: u64,
    pub usage_estimated: bool,
}

impl AttemptTotals {
    fn absorb(&mut self, response: &RawResponse) {
        self.input_tokens += response.input_tokens;
        self.output_tokens += response.output_tokens;
        self.latency_ms += response.latency_ms;
        self.usage_estimated |= response.usage_estimated;
    }
}

/// A parsed verdict together with what it cost to obtain.
#[derive(Debug, Clone)]
pub struct JudgeSuccess {
    pub judgment: ParsedJudgment,
    pub totals: AttemptTotals,
}

/// Terminal failure for one pair. No score is ever fabricated; the last
/// cause is preserved for diagnostics and the usage still counts.
#[derive(Debug, Error)]
#[error("judgment failed after {} attempt(s): {cause}", totals.attempts)]
pub struct JudgeFailure {
    pub totals: AttemptTotals,
    pub cause: JudgeFailureCause,
}

#[derive(Debug, Error)]
pub enum JudgeFailureCause {
    #[error("prompt: {0}")]
    Prompt(#[from] PromptError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    #[error("unparseable verdict: {0}")]
    Parse(#[from] ParseJudgmentError),
}

/// Render the prompt for a pair, call the backend, and parse the verdict,
/// retrying on parse failures and retryable transport failures.
///
/// Every retry re-sends the identical prompt. Rate-limit replies wait at
/// least the endpoint-suggested delay. Fatal backend errors (auth,
/// malformed request) stop immediately.
pub fn judge_pair(
    backend: &dyn Backend,
    template: &PromptTemplate,
    query: &str,
    document: &str,
    spec: &ModelSpec,
    policy: &RetryPolicy,
    max_doc_tokens: usize,
) -> Result<JudgeSuccess, JudgeFailure> {
    let mut totals = AttemptTotals::default();
    let prompt = render_prompt_budgeted(template, query, document, max_doc_tokens)
        .map_err(|e| JudgeFailure {
            totals,
            cause: e.into(),
        })?;

    let mut last_cause: Option<JudgeFailureCause> = None;
    for attempt in 1..=policy.max_attempts {
        totals.attempts = attempt;
        match backend.complete(&prompt, spec) {
            Ok(response) => {
                totals.absorb(&response);
                match parse_judgment(&response.text) {
                    Ok(judgment) => return Ok(JudgeSuccess { judgment, totals }),
                    Err(e) => last_cause = Some(e.into()),
                }
            }
            Err(e) if e.is_retryable() => {
                let suggested = e.suggested_delay();
                last_cause = Some(e.into());
                if attempt < policy.max_attempts {
                    let delay = policy.delay_after(attempt).max(suggested);
                    std::thread::sleep(delay);
                    continue;
                }
            }
            Err(e) => {
                return Err(JudgeFailure {
                    totals,
                    cause: e.into(),
                });
            }
        }
        if attempt < policy.max_attempts {
            std::thread::sleep(policy.delay_after(attempt));
        }
    }

    Err(JudgeFailure {
        totals,
        cause: last_cause.expect("at least one attempt ran"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompting::default_template;

    fn spec() -> ModelSpec {
        ModelSpec {
            model_name: "test-model".into(),
            backend_id: "mock".into(),
            temperature: 0.0,
            max_output_tokens: 512,
        }
    }

    fn fast_policy(max_attempts: u32) -> RetryPolicy {
        RetryPolicy::new(max_attempts, 0, 1.0).unwrap()
    }

    #[test]
    fn valid_json_first_try_is_one_attempt() {
        let backend = MockBackend::with_default(r#"{"reason":"on topic","score":2}"#);
        let result = judge_pair(
            &backend,
            &default_template(),
            "q",
            "d",
            &spec(),
            &fast_policy(3),
            3000,
        )
        .unwrap();
        assert_eq!(result.totals.attempts, 1);
        assert_eq!(result.judgment.score.value(), 2);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn garbage_then_valid_sums_usage_over_two_attempts() {
        use crate::collection::tokenize;
        use crate::prompting::render_prompt;

        let replies = ["not json at all", r#"{"reason":"ok","score":1}"#];
        let backend = ScriptedBackend::new(replies.iter().map(|r| Ok(r.to_string())).collect());
        let result = judge_pair(
            &backend,
            &default_template(),
            "q",
            "d",
            &spec(),
            &fast_policy(3),
            3000,
        )
        .unwrap();
        assert_eq!(result.totals.attempts, 2);
        assert_eq!(backend.calls(), 2);

        // Scripted usage counts tokens of prompt and reply; totals must be
        // the exact sum over both attempts.
        let prompt = render_prompt(&default_template(), "q", "d").unwrap();
        let expected_in = 2 * tokenize(&prompt.text).len() as u64;
        let expected_out: u64 = replies.iter().map(|r| tokenize(r).len() as u64).sum();
        assert_eq!(result.totals.input_tokens, expected_in);
        assert_eq!(result.totals.output_tokens, expected_out);
    }

    #[test]
    fn always_garbage_fails_after_exactly_max_attempts() {
        let backend = MockBackend::with_default("garbage");
        let err = judge_pair(
            &backend,
            &default_template(),
            "q",
            "d",
            &spec(),
            &fast_policy(3),
            3000,
        )
        .unwrap_err();
        assert_eq!(err.totals.attempts, 3);
        assert_eq!(backend.calls(), 3);
        assert!(matches!(err.cause, JudgeFailureCause::Parse(_)));
    }

    #[test]
    fn rate_limit_retries_with_suggested_delay() {
        let backend = ScriptedBackend::new(vec![
            Err(BackendError::RateLimited {
                retry_after_ms: Some(1),
            }),
            Ok(r#"{"reason":"ok","score":0}"#.to_string()),
        ]);
        let result = judge_pair(
            &backend,
            &default_template(),
            "q",
            "d",
            &spec(),
            &fast_policy(2),
            3000,
        )
        .unwrap();
        assert_eq!(result.totals.attempts, 2);
    }

    #[test]
    fn fatal_backend_error_stops_immediately() {
        let backend = ScriptedBackend::new(vec![
            Err(BackendError::Http {
                status: 401,
                body: "unauthorized".into(),
            }),
            Ok(r#"{"reason":"ok","score":0}"#.to_string()),
        ]);
        let err = judge_pair(
            &backend,
            &default_template(),
            "q",
            "d",
            &spec(),
            &fast_policy(3),
            3000,
        )
        .unwrap_err();
        assert_eq!(err.totals.attempts, 1);
        assert_eq!(backend.calls(), 1);
    }

    #[test]
    fn empty_query_fails_without_backend_call() {
        let backend = MockBackend::with_default("anything");
        let err = judge_pair(
            &backend,
            &default_template(),
            "",
            "d",
            &spec(),
            &fast_policy(3),
            3000,
        )
        .unwrap_err();
        assert_eq!(err.totals.attempts, 0);
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn retry_delays_never_decrease() {
        let policy = RetryPolicy::default();
        let mut prev = Duration::ZERO;
        for attempt in 1..=6 {
            let d = policy.delay_after(attempt);
            assert!(d >= prev);
            prev = d;
        }
    }

    #[test]
    fn retry_policy_rejects_zero_attempts_and_shrinking_backoff() {
        assert!(RetryPolicy::new(0, 100, 2.0).is_err());
        assert!(RetryPolicy::new(3, 100, 0.5).is_err());
    }
}
