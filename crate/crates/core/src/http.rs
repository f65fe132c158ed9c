//! Blocking HTTP plumbing shared by the embedding, rerank and model clients:
//! retry with exponential backoff and jitter, an in-flight limiter, and
//! bearer-token lookup.

use std::sync::{Condvar, Mutex};
use std::time::Duration;

use rand::Rng;
use reqwest::blocking::{Client, Response};
use reqwest::StatusCode;

/// Outcome of a single failed call attempt.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CallError {
    /// Worth retrying: connection failures, 5xx, 429.
    Transient(String),
    Timeout(String),
    /// 401/403 or a missing credential; never retried.
    Auth(String),
    /// Any other failure that a retry will not fix.
    Fatal(String),
}

impl CallError {
    fn retryable(&self) -> bool {
        matches!(self, CallError::Transient(_) | CallError::Timeout(_))
    }

    pub fn message(&self) -> &str {
        match self {
            CallError::Transient(m) | CallError::Timeout(m) | CallError::Auth(m) | CallError::Fatal(m) => m,
        }
    }
}

impl From<reqwest::Error> for CallError {
    fn from(e: reqwest::Error) -> Self {
        if e.is_timeout() {
            CallError::Timeout(e.to_string())
        } else if e.is_connect() || e.is_request() || e.is_body() {
            CallError::Transient(e.to_string())
        } else if e.is_decode() {
            CallError::Fatal(format!("undecodable response: {e}"))
        } else {
            CallError::Transient(e.to_string())
        }
    }
}

/// Maps a non-success status to a call error, consuming the body for context.
pub fn status_error(resp: Response) -> CallError {
    let status = resp.status();
    let body: String = resp.text().unwrap_or_default().chars().take(300).collect();
    let msg = format!("HTTP {status}: {body}");
    match status {
        StatusCode::UNAUTHORIZED | StatusCode::FORBIDDEN => CallError::Auth(msg),
        StatusCode::TOO_MANY_REQUESTS | StatusCode::REQUEST_TIMEOUT => CallError::Transient(msg),
        s if s.is_server_error() => CallError::Transient(msg),
        _ => CallError::Fatal(msg),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
    pub max_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(250),
            max_delay: Duration::from_secs(8),
        }
    }
}

impl RetryPolicy {
    pub fn with_retries(max_retries: u32) -> Self {
        RetryPolicy {
            max_retries,
            ..Default::default()
        }
    }

    /// Delay before retry number `attempt` (0-based): doubling from the base,
    /// capped, then scaled by a random factor in [0.5, 1.0).
    pub fn delay(&self, attempt: u32) -> Duration {
        let exp = self
            .base_delay
            .saturating_mul(1u32.checked_shl(attempt).unwrap_or(u32::MAX))
            .min(self.max_delay);
        exp.mul_f64(rand::thread_rng().gen_range(0.5..1.0))
    }

    /// Runs `call` until it succeeds, fails permanently, or the retry budget
    /// is spent. The closure receives the 0-based attempt number.
    pub fn run<T>(&self, mut call: impl FnMut(u32) -> Result<T, CallError>) -> Result<T, CallError> {
        let mut attempt = 0;
        loop {
            match call(attempt) {
                Ok(v) => return Ok(v),
                Err(e) if e.retryable() && attempt < self.max_retries => {
                    let wait = self.delay(attempt);
                    log::warn!(
                        "attempt {}/{} failed: {}; retrying in {:?}",
                        attempt + 1,
                        self.max_retries + 1,
                        e.message(),
                        wait
                    );
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Counting semaphore bounding concurrent provider calls.
#[derive(Debug)]
pub struct InFlightLimit {
    available: Mutex<usize>,
    released: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub fn new(limit: usize) -> Self {
        InFlightLimit {
            available: Mutex::new(limit.max(1)),
            released: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().expect("limiter poisoned");
        while *n == 0 {
            n = self.released.wait(n).expect("limiter poisoned");
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().expect("limiter poisoned") += 1;
        self.0.released.notify_one();
    }
}

/// Reads a bearer token from the named environment variable.
pub fn bearer_token(env_var: Option<&str>) -> Result<Option<String>, CallError> {
    match env_var {
        None => Ok(None),
        Some(name) => std::env::var(name)
            .map(Some)
            .map_err(|_| CallError::Auth(format!("environment variable {name} is not set"))),
    }
}

pub fn client(timeout: Duration) -> Result<Client, CallError> {
    Client::builder()
        .timeout(timeout)
        .build()
        .map_err(|e| CallError::Fatal(format!("cannot build HTTP client: {e}")))
}
