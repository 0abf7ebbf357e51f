use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use serde_json::{json, Value};

use super::{BackendError, CompletionBackend, CompletionRequest, API_KEY_ENV, ENDPOINT_ENV};

/// Spaces requests evenly so that at most `per_minute` start in any minute.
/// One limiter is shared by every backend that talks to the same endpoint.
#[derive(Debug)]
pub struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Instant>,
}

impl RateLimiter {
    pub fn new(per_minute: Option<u32>) -> Self {
        RateLimiter {
            interval: per_minute.filter(|&n| n > 0).map(|n| Duration::from_secs(60) / n),
            next: Mutex::new(Instant::now()),
        }
    }

    pub fn unlimited() -> Self {
        Self::new(None)
    }

    pub fn acquire(&self) {
        let Some(interval) = self.interval else {
            return;
        };
        let slot = {
            let mut next = self.next.lock().expect("rate limiter poisoned");
            let slot = (*next).max(Instant::now());
            *next = slot + interval;
            slot
        };
        let now = Instant::now();
        if slot > now {
            thread::sleep(slot - now);
        }
    }
}

#[derive(Debug, Clone)]
pub struct HttpSettings {
    pub endpoint_url: Option<String>,
    pub model_name: String,
    pub request_timeout_ms: u64,
    pub max_retries: u32,
    pub retry_backoff_ms: u64,
}

/// Completions-style endpoint: POST `{model, prompt, temperature, n,
/// max_tokens}`, read `choices[0].text` (or `choices[0].message.content`).
pub struct HttpBackend {
    client: reqwest::blocking::Client,
    endpoint: String,
    api_key: Option<String>,
    settings: HttpSettings,
    limiter: Arc<RateLimiter>,
    attempts: AtomicU64,
}

impl HttpBackend {
    pub fn new(settings: HttpSettings, limiter: Arc<RateLimiter>) -> Result<Self, BackendError> {
        let endpoint = settings
            .endpoint_url
            .clone()
            .or_else(|| std::env::var(ENDPOINT_ENV).ok())
            .filter(|s| !s.is_empty())
            .ok_or_else(|| BackendError::Config(format!("no endpoint_url and {ENDPOINT_ENV} unset")))?;
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(settings.request_timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(HttpBackend {
            client,
            endpoint,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
            settings,
            limiter,
            attempts: AtomicU64::new(0),
        })
    }

    fn attempt(&self, body: &Value) -> Result<String, BackendError> {
        self.limiter.acquire();
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let mut req = self.client.post(&self.endpoint).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| BackendError::Transport(e.to_string()))?;
        if !status.is_success() {
            let mut body = text;
            body.truncate(500);
            return Err(BackendError::Status {
                status: status.as_u16(),
                body,
            });
        }
        parse_completion(&text)
    }
}

/// Extracts the first choice's text from a completion response body.
pub(crate) fn parse_completion(body: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BackendError::Malformed(e.to_string()))?;
    let choice = value
        .get("choices")
        .and_then(|c| c.get(0))
        .ok_or_else(|| BackendError::Malformed("no choices".into()))?;
    choice
        .get("text")
        .and_then(Value::as_str)
        .or_else(|| choice.pointer("/message/content").and_then(Value::as_str))
        .map(str::to_string)
        .ok_or_else(|| BackendError::Malformed("choice has no text".into()))
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest<'_>) -> Result<String, BackendError> {
        let body = json!({
            "model": self.settings.model_name,
            "prompt": request.prompt,
            "temperature": request.temperature,
            "n": 1,
            "max_tokens": request.max_tokens,
        });
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(e) if e.retryable() && attempt < self.settings.max_retries => {
                    let delay = self.settings.retry_backoff_ms.saturating_mul(1 << attempt.min(20));
                    log::debug!(
                        "{}: attempt {} failed ({e}), retrying in {delay} ms",
                        request.problem_id,
                        attempt + 1
                    );
                    thread::sleep(Duration::from_millis(delay));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }

    fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }
}
