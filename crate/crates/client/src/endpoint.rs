//! One chat-completions request per question, with retry and log-prob extraction.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};
use std::time::Duration;

use confbench_core::OptionLabel;
use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use reqwest::StatusCode;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{ClientError, Result};
use crate::templates::ChatMessage;

pub const DEFAULT_API_KEY_ENV: &str = "CONFBENCH_API_KEY";

/// Letters missing from the returned alternatives sit this far (ln 1e6) below
/// the smallest returned log-probability.
pub const FLOOR_LOG_GAP: f64 = 13.815_510_557_964_274;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    /// Base of the exponential backoff, in seconds.
    pub backoff_base: f64,
    /// Upper bound on a single sleep, in seconds.
    pub backoff_cap: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 4,
            backoff_base: 0.5,
            backoff_cap: 30.0,
        }
    }
}

/// Full-jitter backoff: uniform in `[0, min(cap, base * 2^attempt))`, with
/// `attempt` counted from zero.
pub fn backoff_delay(policy: &RetryPolicy, attempt: u32, rng: &mut impl Rng) -> Duration {
    let ceiling = (policy.backoff_base * 2f64.powi(attempt.min(62) as i32)).min(policy.backoff_cap);
    if ceiling <= 0.0 {
        return Duration::ZERO;
    }
    Duration::from_secs_f64(rng.random::<f64>() * ceiling)
}

#[derive(Clone, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    pub model_id: String,
    /// Per-request timeout in seconds.
    pub timeout: f64,
    pub max_concurrency: usize,
    pub retry: RetryPolicy,
    pub max_tokens: u32,
    pub top_logprobs: u32,
}

impl std::fmt::Debug for EndpointConfig {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointConfig")
            .field("base_url", &self.base_url)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .field("model_id", &self.model_id)
            .field("timeout", &self.timeout)
            .field("max_concurrency", &self.max_concurrency)
            .field("retry", &self.retry)
            .field("max_tokens", &self.max_tokens)
            .field("top_logprobs", &self.top_logprobs)
            .finish()
    }
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, model_id: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            api_key: None,
            model_id: model_id.into(),
            timeout: 60.0,
            max_concurrency: 4,
            retry: RetryPolicy::default(),
            max_tokens: 1,
            top_logprobs: 20,
        }
    }

    /// Read the API key from `var`; an unset variable leaves the key empty.
    pub fn with_key_from_env(mut self, var: &str) -> Self {
        self.api_key = std::env::var(var).ok().filter(|k| !k.is_empty());
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(ClientError::InvalidConfig(m));
        if self.base_url.trim().is_empty() {
            return bad("base_url is empty".into());
        }
        if self.max_concurrency < 1 {
            return bad("max_concurrency must be at least 1".into());
        }
        if !(self.timeout.is_finite() && self.timeout > 0.0) {
            return bad(format!("timeout must be positive, got {}", self.timeout));
        }
        if self.retry.max_attempts < 1 {
            return bad("retry.max_attempts must be at least 1".into());
        }
        if !(self.retry.backoff_base >= 0.0 && self.retry.backoff_cap >= 0.0) {
            return bad("backoff durations must be non-negative".into());
        }
        if self.max_tokens < 1 || self.top_logprobs < 1 {
            return bad("max_tokens and top_logprobs must be at least 1".into());
        }
        Ok(())
    }

    pub fn client(&self) -> Result<reqwest::Client> {
        self.validate()?;
        reqwest::Client::builder()
            .timeout(Duration::from_secs_f64(self.timeout))
            .build()
            .map_err(|e| ClientError::InvalidConfig(format!("http client: {e}")))
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.base_url.trim_end_matches('/'))
    }

    fn body(&self, messages: &[ChatMessage]) -> Value {
        json!({
            "model": self.model_id,
            "messages": messages,
            "temperature": 0,
            "max_tokens": self.max_tokens,
            "logprobs": true,
            "top_logprobs": self.top_logprobs,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FetchResult {
    pub logprobs: BTreeMap<OptionLabel, f64>,
    pub predicted_label: OptionLabel,
}

fn retryable(status: StatusCode) -> bool {
    status == StatusCode::TOO_MANY_REQUESTS || status.is_server_error()
}

fn snippet(text: &str) -> String {
    let t: String = text.chars().take(200).collect();
    t.replace('\n', " ")
}

/// Send the request (retrying network errors, 429 and 5xx) and read the
/// option-letter log-probabilities from the answer token.
pub async fn fetch_logprobs(
    client: &reqwest::Client,
    cfg: &EndpointConfig,
    messages: &[ChatMessage],
    option_letters: &[OptionLabel],
) -> Result<FetchResult> {
    if option_letters.is_empty() {
        return Err(ClientError::InvalidOptions("no option letters".into()));
    }
    let body = cfg.body(messages);
    // Jitter only spreads retries out; seeding it from the request keeps
    // concurrent retries apart without touching OS entropy.
    let mut hasher = DefaultHasher::new();
    body.to_string().hash(&mut hasher);
    let mut rng = SplitMix64::seed_from_u64(hasher.finish());

    let url = cfg.url();
    let mut last = String::new();
    for attempt in 0..cfg.retry.max_attempts {
        if attempt > 0 {
            tokio::time::sleep(backoff_delay(&cfg.retry, attempt - 1, &mut rng)).await;
        }
        let mut req = client.post(&url).json(&body);
        if let Some(key) = &cfg.api_key {
            req = req.bearer_auth(key);
        }
        match req.send().await {
            Ok(resp) if resp.status().is_success() => {
                let text = resp.text().await.map_err(|e| ClientError::Transport {
                    attempts: attempt + 1,
                    message: format!("reading body: {e}"),
                })?;
                let value: Value = serde_json::from_str(&text).map_err(|e| {
                    ClientError::Capability(format!("response is not JSON ({e}): {}", snippet(&text)))
                })?;
                return extract_logprobs(&value, option_letters);
            }
            Ok(resp) if retryable(resp.status()) => {
                last = format!("HTTP {}", resp.status());
                tracing::debug!(attempt, status = %resp.status(), "retrying");
            }
            Ok(resp) => {
                let status = resp.status();
                let text = resp.text().await.unwrap_or_default();
                return Err(ClientError::Transport {
                    attempts: attempt + 1,
                    message: format!("HTTP {status}: {}", snippet(&text)),
                });
            }
            Err(e) => {
                last = e.to_string();
                tracing::debug!(attempt, error = %e, "retrying");
            }
        }
    }
    Err(ClientError::Transport {
        attempts: cfg.retry.max_attempts,
        message: last,
    })
}

fn as_letter(token: &str, letters: &[OptionLabel]) -> Option<OptionLabel> {
    let t = token.trim();
    let mut chars = t.chars();
    let c = chars.next()?;
    if chars.next().is_some() || !c.is_ascii_uppercase() {
        return None;
    }
    let l = OptionLabel::new(c).ok()?;
    letters.contains(&l).then_some(l)
}

/// Read option log-probabilities from a chat-completions response body.
///
/// The answer is the first generated token that is not pure whitespace; it
/// must be one of `letters` and every later token must be whitespace.
pub fn extract_logprobs(response: &Value, letters: &[OptionLabel]) -> Result<FetchResult> {
    let choice = response
        .pointer("/choices/0")
        .ok_or_else(|| ClientError::Capability("response has no choices".into()))?;
    let tokens = choice
        .pointer("/logprobs/content")
        .and_then(Value::as_array)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| ClientError::Capability("choice carries no token log-probabilities".into()))?;

    let token_text = |t: &Value| t.get("token").and_then(Value::as_str).unwrap_or("").to_string();
    let answer_at = tokens
        .iter()
        .position(|t| !token_text(t).trim().is_empty())
        .ok_or_else(|| ClientError::UnparseableAnswer("answer is empty".into()))?;
    let decoded: String = tokens.iter().map(token_text).collect();
    if tokens[answer_at + 1..].iter().any(|t| !token_text(t).trim().is_empty()) {
        return Err(ClientError::UnparseableAnswer(format!("{decoded:?} spans several tokens")));
    }
    if let Some(content) = choice.pointer("/message/content").and_then(Value::as_str) {
        if content.trim() != token_text(&tokens[answer_at]).trim() {
            return Err(ClientError::UnparseableAnswer(format!("{content:?}")));
        }
    }
    let answer = &tokens[answer_at];
    let predicted = as_letter(&token_text(answer), letters)
        .ok_or_else(|| ClientError::UnparseableAnswer(format!("{decoded:?} is not one of the option letters")))?;

    let alternatives = answer
        .get("top_logprobs")
        .and_then(Value::as_array)
        .filter(|a| !a.is_empty())
        .ok_or_else(|| ClientError::Capability("answer token has no top-k alternatives".into()))?;

    let mut found: BTreeMap<OptionLabel, f64> = BTreeMap::new();
    let mut floor_base = f64::INFINITY;
    let mut note = |label: Option<OptionLabel>, lp: f64| {
        floor_base = floor_base.min(lp);
        if let Some(l) = label {
            let slot = found.entry(l).or_insert(lp);
            *slot = slot.max(lp);
        }
    };
    for alt in alternatives {
        let Some(lp) = alt.get("logprob").and_then(Value::as_f64).filter(|x| x.is_finite()) else {
            continue;
        };
        note(as_letter(&token_text(alt), letters), lp);
    }
    if let Some(lp) = answer.get("logprob").and_then(Value::as_f64).filter(|x| x.is_finite()) {
        note(Some(predicted), lp);
    }
    if !floor_base.is_finite() {
        return Err(ClientError::Capability("no finite log-probabilities returned".into()));
    }

    let floor = floor_base - FLOOR_LOG_GAP;
    let logprobs = letters
        .iter()
        .map(|l| (*l, found.get(l).copied().unwrap_or(floor)))
        .collect();
    Ok(FetchResult {
        logprobs,
        predicted_label: predicted,
    })
}
