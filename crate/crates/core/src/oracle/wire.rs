use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::prompt::{build_best_of_prompt, parse_best_of_response};
use super::{Candidate, ComparatorOracle, OracleFailure, Verdict};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleEndpoint {
    pub base_url: String,
    #[serde(default = "default_auth_env")]
    pub auth_token_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// Calls per second across all threads; 0 disables the limit.
    #[serde(default)]
    pub rate_limit: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_backoff")]
    pub backoff_base_ms: u64,
}

fn default_auth_env() -> String {
    "CLIRKIT_ORACLE_TOKEN".into()
}
fn default_timeout() -> f64 {
    60.0
}
fn default_retries() -> u32 {
    3
}
fn default_max_tokens() -> u32 {
    8
}
fn default_backoff() -> u64 {
    500
}

impl OracleEndpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        OracleEndpoint {
            base_url: base_url.into(),
            auth_token_env: default_auth_env(),
            timeout_secs: default_timeout(),
            max_retries: default_retries(),
            rate_limit: 0.0,
            max_tokens: default_max_tokens(),
            backoff_base_ms: default_backoff(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.timeout_secs.is_finite() && self.timeout_secs > 0.0) {
            return Err(Error::Config(format!("oracle timeout must be > 0, got {}", self.timeout_secs)));
        }
        if !(self.rate_limit.is_finite() && self.rate_limit >= 0.0) {
            return Err(Error::Config(format!("oracle rate limit must be >= 0, got {}", self.rate_limit)));
        }
        if self.base_url.is_empty() {
            return Err(Error::Config("oracle base_url is empty".into()));
        }
        Ok(())
    }

    fn url(&self) -> String {
        format!("{}/v1/complete", self.base_url.trim_end_matches('/'))
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    system: &'a str,
    prompt: &'a str,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
}

/// Spaces call starts at least `interval` apart, shared by every thread.
#[derive(Debug)]
struct RateLimiter {
    interval: Option<Duration>,
    next: Mutex<Option<Instant>>,
}

impl RateLimiter {
    fn new(per_sec: f64) -> Self {
        RateLimiter {
            interval: (per_sec > 0.0).then(|| Duration::from_secs_f64(1.0 / per_sec)),
            next: Mutex::new(None),
        }
    }

    fn acquire(&self) {
        let Some(interval) = self.interval else { return };
        let wait = {
            let mut next = self.next.lock().unwrap_or_else(|e| e.into_inner());
            let now = Instant::now();
            let slot = next.map_or(now, |n| n.max(now));
            *next = Some(slot + interval);
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

enum Attempt {
    Done(String),
    Retry(OracleFailure),
    Fatal(OracleFailure),
}

/// Comparator backed by a JSON-over-HTTP judgment service.
pub struct WireOracle {
    endpoint: OracleEndpoint,
    token: String,
    agent: ureq::Agent,
    limiter: RateLimiter,
    attempts: AtomicU64,
}

impl std::fmt::Debug for WireOracle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("WireOracle")
            .field("endpoint", &self.endpoint)
            .field("attempts", &self.attempts())
            .finish_non_exhaustive()
    }
}

impl WireOracle {
    /// Reads the bearer token up front; a missing variable fails here, before
    /// any request.
    pub fn new(endpoint: OracleEndpoint) -> Result<Self> {
        endpoint.validate()?;
        let token = std::env::var(&endpoint.auth_token_env).map_err(|_| {
            Error::Config(format!("environment variable {} is not set", endpoint.auth_token_env))
        })?;
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(endpoint.timeout_secs)))
            .http_status_as_error(false)
            .build();
        Ok(WireOracle {
            limiter: RateLimiter::new(endpoint.rate_limit),
            agent: ureq::Agent::new_with_config(config),
            endpoint,
            token,
            attempts: AtomicU64::new(0),
        })
    }

    /// HTTP requests issued so far, retries included.
    pub fn attempts(&self) -> u64 {
        self.attempts.load(Ordering::SeqCst)
    }

    fn attempt(&self, body: &CompleteRequest<'_>) -> Attempt {
        self.limiter.acquire();
        self.attempts.fetch_add(1, Ordering::SeqCst);
        let sent = self
            .agent
            .post(&self.endpoint.url())
            .header("Authorization", &format!("Bearer {}", self.token))
            .send_json(body);
        let mut resp = match sent {
            Ok(r) => r,
            Err(e) => return Attempt::Retry(OracleFailure::Transport(e.to_string())),
        };
        let status = resp.status().as_u16();
        if status == 429 || status >= 500 {
            return Attempt::Retry(OracleFailure::Status(status));
        }
        if status >= 400 {
            return Attempt::Fatal(OracleFailure::Status(status));
        }
        match resp.body_mut().read_json::<CompleteResponse>() {
            Ok(r) => Attempt::Done(r.text),
            Err(ureq::Error::Json(e)) => Attempt::Fatal(OracleFailure::Unparseable(e.to_string())),
            Err(e) => Attempt::Retry(OracleFailure::Transport(e.to_string())),
        }
    }

    /// Sends one completion, retrying transport errors, 429 and 5xx with
    /// exponential backoff.
    pub fn complete(&self, system: &str, prompt: &str) -> Result<String, OracleFailure> {
        let body = CompleteRequest {
            system,
            prompt,
            max_tokens: self.endpoint.max_tokens,
        };
        let mut retry = 0u32;
        loop {
            match self.attempt(&body) {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fatal(f) => return Err(f),
                Attempt::Retry(f) if retry >= self.endpoint.max_retries => {
                    warn!("oracle gave up after {} attempts: {f}", retry + 1);
                    return Err(f);
                }
                Attempt::Retry(f) => {
                    let delay = self.endpoint.backoff_base_ms.saturating_mul(1 << retry.min(16));
                    debug!("oracle attempt {} failed ({f}); retrying in {delay} ms", retry + 1);
                    std::thread::sleep(Duration::from_millis(delay));
                    retry += 1;
                }
            }
        }
    }
}

impl ComparatorOracle for WireOracle {
    fn best_of(&self, title: &str, description: &str, passages: &[Candidate<'_>]) -> Verdict {
        let texts: Vec<&str> = passages.iter().map(|p| p.text).collect();
        let prompt = build_best_of_prompt(title, description, &texts).map_err(|_| OracleFailure::Arity(passages.len()))?;
        let text = self.complete(&prompt.system, &prompt.user)?;
        parse_best_of_response(&text, passages.len())
    }
}
