//! Rate-limited raw-file HTTP fetching.

use std::fmt;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

/// Environment variable holding the optional fetch token.
pub const TOKEN_ENV_VAR: &str = "TRAVIS_TDM_FETCH_TOKEN";

/// A credential that never prints.
#[derive(Clone, PartialEq, Eq)]
pub struct Secret(String);

impl Secret {
    pub fn new(value: impl Into<String>) -> Self {
        Self(value.into())
    }

    pub fn from_env() -> Option<Self> {
        std::env::var(TOKEN_ENV_VAR)
            .ok()
            .filter(|v| !v.trim().is_empty())
            .map(Self)
    }

    pub fn expose(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Secret {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("Secret(<redacted>)")
    }
}

#[derive(Debug, Clone)]
pub struct FetchPolicy {
    pub max_requests_per_hour: u32,
    /// Extra attempts allowed after a failed one.
    pub retry_budget: u32,
    pub timeout: Duration,
    /// Delay before the first retry; doubles on each further retry.
    pub backoff_base: Duration,
    pub auth_token: Option<Secret>,
}

impl Default for FetchPolicy {
    fn default() -> Self {
        Self {
            max_requests_per_hour: 5000,
            retry_budget: 3,
            timeout: Duration::from_secs(30),
            backoff_base: Duration::from_secs(2),
            auth_token: None,
        }
    }
}

impl FetchPolicy {
    pub fn with_env_token(mut self) -> Self {
        self.auth_token = Secret::from_env();
        self
    }
}

pub trait Clock: Send + Sync {
    /// Time elapsed since an arbitrary fixed origin.
    fn now(&self) -> Duration;
    fn sleep(&self, d: Duration);
}

#[derive(Debug)]
pub struct SystemClock {
    origin: Instant,
}

impl Default for SystemClock {
    fn default() -> Self {
        Self {
            origin: Instant::now(),
        }
    }
}

impl Clock for SystemClock {
    fn now(&self) -> Duration {
        self.origin.elapsed()
    }

    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// A clock that only moves when slept on.
#[derive(Debug, Default)]
pub struct FakeClock {
    now: Mutex<Duration>,
}

impl FakeClock {
    pub fn new() -> Self {
        Self::default()
    }
}

impl Clock for FakeClock {
    fn now(&self) -> Duration {
        *self.now.lock().unwrap()
    }

    fn sleep(&self, d: Duration) {
        *self.now.lock().unwrap() += d;
    }
}

/// One token in bucket units; refilling `capacity` units per nanosecond
/// yields `capacity` tokens per hour with exact integer arithmetic.
const TOKEN_UNITS: i128 = 3_600 * 1_000_000_000;

#[derive(Debug)]
struct Bucket {
    /// May go negative: each caller reserves a token and waits off the debt.
    units: i128,
    updated: Duration,
}

/// Thread-safe token bucket holding up to `max_requests_per_hour` tokens,
/// refilled continuously over the hour.
pub struct RateLimiter {
    capacity: i128,
    bucket: Mutex<Bucket>,
    clock: Arc<dyn Clock>,
}

impl fmt::Debug for RateLimiter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RateLimiter")
            .field("capacity", &self.capacity)
            .field("bucket", &self.bucket)
            .finish()
    }
}

impl RateLimiter {
    pub fn new(max_requests_per_hour: u32, clock: Arc<dyn Clock>) -> Self {
        let capacity = i128::from(max_requests_per_hour.max(1));
        let now = clock.now();
        Self {
            capacity,
            bucket: Mutex::new(Bucket {
                units: capacity * TOKEN_UNITS,
                updated: now,
            }),
            clock,
        }
    }

    pub fn clock(&self) -> &Arc<dyn Clock> {
        &self.clock
    }

    /// Blocks until a request may be sent. Returns the time waited.
    pub fn acquire(&self) -> Duration {
        let wait = {
            let mut b = self.bucket.lock().unwrap();
            let now = self.clock.now();
            let elapsed = now.saturating_sub(b.updated).as_nanos() as i128;
            b.units = (b.units + elapsed * self.capacity).min(self.capacity * TOKEN_UNITS);
            b.updated = now;
            b.units -= TOKEN_UNITS;
            if b.units >= 0 {
                Duration::ZERO
            } else {
                let nanos = (-b.units + self.capacity - 1) / self.capacity;
                Duration::from_nanos(nanos as u64)
            }
        };
        if !wait.is_zero() {
            self.clock.sleep(wait);
        }
        wait
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FetchResponse {
    pub status: u16,
    pub body: Vec<u8>,
}

/// Transport failure: no HTTP status was received.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransportError(pub String);

impl fmt::Display for TransportError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait Fetcher: Send + Sync {
    fn get(
        &self,
        url: &str,
        token: Option<&Secret>,
        timeout: Duration,
    ) -> Result<FetchResponse, TransportError>;
}

/// HTTPS client backed by `ureq`.
#[derive(Debug, Default)]
pub struct HttpFetcher;

impl Fetcher for HttpFetcher {
    fn get(
        &self,
        url: &str,
        token: Option<&Secret>,
        timeout: Duration,
    ) -> Result<FetchResponse, TransportError> {
        if !url.starts_with("https://") {
            return Err(TransportError(format!("refusing non-HTTPS URL {url}")));
        }
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        let mut req = agent.get(url);
        if let Some(t) = token {
            req = req.header("Authorization", &format!("token {}", t.expose()));
        }
        let mut resp = req.call().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_vec()
            .map_err(|e| TransportError(e.to_string()))?;
        Ok(FetchResponse { status, body })
    }
}
