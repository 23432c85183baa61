//! HTTP plumbing shared by the remote embedding and chat clients.
//!
//! Requests go through [`HttpTransport`] so tests can substitute recorded
//! fixtures for the network. [`post_with_retry`] layers the timeout and
//! bounded exponential backoff on top.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "EXPMEM_API_KEY";
/// Environment variable overriding the service base URL.
pub const BASE_URL_ENV: &str = "EXPMEM_BASE_URL";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com";

const BODY_EXCERPT_LEN: usize = 240;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("backend unavailable after {attempts} attempt(s): {message}")]
    Unavailable { attempts: u32, message: String },
    #[error("backend returned HTTP {status} after {attempts} attempt(s): {body}")]
    Http { status: u16, body: String, attempts: u32 },
    #[error("could not parse backend response: {0}")]
    Parse(String),
    #[error("protocol violation: {0}")]
    ProtocolViolation(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    pub body: String,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("transport failure: {0}")]
pub struct TransportError(pub String);

pub trait HttpTransport: Send + Sync {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RetryPolicy {
    pub timeout: Duration,
    pub attempts: u32,
    pub initial_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            timeout: Duration::from_secs(30),
            attempts: 3,
            initial_backoff: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    /// Same budget without sleeping between attempts.
    pub fn without_backoff(mut self) -> Self {
        self.initial_backoff = Duration::ZERO;
        self
    }

    fn backoff(&self, attempt: u32) -> Duration {
        self.initial_backoff.saturating_mul(1 << (attempt - 1).min(16))
    }
}

fn excerpt(body: &str) -> String {
    let mut out: String = body.chars().take(BODY_EXCERPT_LEN).collect();
    if body.chars().count() > BODY_EXCERPT_LEN {
        out.push_str("...");
    }
    out
}

fn retryable(status: u16) -> bool {
    status == 429 || (500..600).contains(&status)
}

/// POSTs `body` and returns the parsed JSON of a 2xx reply.
///
/// 429 and 5xx replies and transport failures are retried up to the policy's
/// attempt budget. Other statuses fail immediately.
pub fn post_with_retry(
    transport: &dyn HttpTransport,
    url: &str,
    bearer: Option<&str>,
    body: &Value,
    policy: &RetryPolicy,
) -> Result<Value, BackendError> {
    let attempts = policy.attempts.max(1);
    let mut last = BackendError::Unavailable {
        attempts: 0,
        message: "no attempt made".into(),
    };
    for attempt in 1..=attempts {
        match transport.post_json(url, bearer, body, policy.timeout) {
            Ok(resp) if (200..300).contains(&resp.status) => {
                return serde_json::from_str(&resp.body)
                    .map_err(|e| BackendError::Parse(format!("{e}: {}", excerpt(&resp.body))));
            }
            Ok(resp) => {
                let err = BackendError::Http {
                    status: resp.status,
                    body: excerpt(&resp.body),
                    attempts: attempt,
                };
                if !retryable(resp.status) {
                    return Err(err);
                }
                tracing::warn!(status = resp.status, attempt, "retryable backend reply");
                last = err;
            }
            Err(TransportError(message)) => {
                tracing::warn!(%message, attempt, "transport failure");
                last = BackendError::Unavailable {
                    attempts: attempt,
                    message,
                };
            }
        }
        if attempt < attempts {
            std::thread::sleep(policy.backoff(attempt));
        }
    }
    Err(last)
}

/// Live transport backed by a blocking reqwest client.
pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new() -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| BackendError::Unavailable {
                attempts: 0,
                message: e.to_string(),
            })?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let mut req = self
            .client
            .post(url)
            .timeout(timeout)
            .header("content-type", "application/json")
            .body(body.to_string());
        if let Some(token) = bearer {
            req = req.bearer_auth(token);
        }
        let resp = req.send().map_err(|e| TransportError(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp.text().map_err(|e| TransportError(e.to_string()))?;
        Ok(HttpResponse { status, body })
    }
}

/// One recorded request/response pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exchange {
    pub request: RecordedRequest,
    pub response: FixtureResponse,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedRequest {
    pub url: String,
    #[serde(default)]
    pub body: Value,
}

/// A fixture reply: an HTTP status with a JSON or raw-text body, or a
/// transport failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureResponse {
    Http {
        status: u16,
        body: Value,
    },
    TransportFailure {
        transport_error: String,
    },
}

impl FixtureResponse {
    fn to_result(&self) -> Result<HttpResponse, TransportError> {
        match self {
            FixtureResponse::Http { status, body } => Ok(HttpResponse {
                status: *status,
                body: match body {
                    // raw (possibly malformed) bodies are stored as strings
                    Value::String(raw) => raw.clone(),
                    other => other.to_string(),
                },
            }),
            FixtureResponse::TransportFailure { transport_error } => {
                Err(TransportError(transport_error.clone()))
            }
        }
    }
}

/// Replays canned responses in order and records what was sent.
///
/// When the queue runs dry the last response repeats, which lets a single
/// 429 fixture exercise the whole retry budget.
pub struct FixtureTransport {
    responses: Mutex<VecDeque<FixtureResponse>>,
    last: Mutex<Option<FixtureResponse>>,
    sent: Mutex<Vec<RecordedRequest>>,
}

impl FixtureTransport {
    pub fn new(responses: impl IntoIterator<Item = FixtureResponse>) -> Self {
        Self {
            responses: Mutex::new(responses.into_iter().collect()),
            last: Mutex::new(None),
            sent: Mutex::new(Vec::new()),
        }
    }

    /// Loads `{"request": .., "response": ..}` fixture files.
    pub fn from_files<P: AsRef<Path>>(paths: impl IntoIterator<Item = P>) -> Result<Self, BackendError> {
        let mut responses = Vec::new();
        for p in paths {
            let text = std::fs::read_to_string(p.as_ref())
                .map_err(|e| BackendError::InvalidInput(format!("{}: {e}", p.as_ref().display())))?;
            let ex: Exchange = serde_json::from_str(&text)
                .map_err(|e| BackendError::Parse(format!("{}: {e}", p.as_ref().display())))?;
            responses.push(ex.response);
        }
        Ok(Self::new(responses))
    }

    pub fn calls(&self) -> usize {
        self.sent.lock().unwrap().len()
    }

    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.sent.lock().unwrap().clone()
    }
}

impl HttpTransport for FixtureTransport {
    fn post_json(
        &self,
        url: &str,
        _bearer: Option<&str>,
        body: &Value,
        _timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        self.sent.lock().unwrap().push(RecordedRequest {
            url: url.to_string(),
            body: body.clone(),
        });
        let next = self.responses.lock().unwrap().pop_front();
        let mut last = self.last.lock().unwrap();
        let resp = match next {
            Some(r) => {
                *last = Some(r.clone());
                r
            }
            None => last
                .clone()
                .ok_or_else(|| TransportError("fixture queue is empty".into()))?,
        };
        resp.to_result()
    }
}

/// Wraps a live transport and keeps every exchange for later replay.
pub struct RecordingTransport<T> {
    inner: T,
    exchanges: Mutex<Vec<Exchange>>,
}

impl<T: HttpTransport> RecordingTransport<T> {
    pub fn new(inner: T) -> Self {
        Self {
            inner,
            exchanges: Mutex::new(Vec::new()),
        }
    }

    pub fn exchanges(&self) -> Vec<Exchange> {
        self.exchanges.lock().unwrap().clone()
    }

    /// Writes `NNN.json` per exchange into `dir`.
    pub fn write_fixtures(&self, dir: impl AsRef<Path>) -> std::io::Result<()> {
        std::fs::create_dir_all(dir.as_ref())?;
        for (i, ex) in self.exchanges.lock().unwrap().iter().enumerate() {
            let text = serde_json::to_string_pretty(ex).map_err(std::io::Error::other)?;
            std::fs::write(dir.as_ref().join(format!("{i:03}.json")), text)?;
        }
        Ok(())
    }
}

impl<T: HttpTransport> HttpTransport for RecordingTransport<T> {
    fn post_json(
        &self,
        url: &str,
        bearer: Option<&str>,
        body: &Value,
        timeout: Duration,
    ) -> Result<HttpResponse, TransportError> {
        let result = self.inner.post_json(url, bearer, body, timeout);
        let response = match &result {
            Ok(r) => FixtureResponse::Http {
                status: r.status,
                body: serde_json::from_str(&r.body).unwrap_or_else(|_| Value::String(r.body.clone())),
            },
            Err(TransportError(m)) => FixtureResponse::TransportFailure {
                transport_error: m.clone(),
            },
        };
        self.exchanges.lock().unwrap().push(Exchange {
            request: RecordedRequest {
                url: url.to_string(),
                body: body.clone(),
            },
            response,
        });
        result
    }
}

/// Joins a base URL and an API path without doubling slashes.
pub fn endpoint(base_url: &str, path: &str) -> String {
    format!("{}/{}", base_url.trim_end_matches('/'), path.trim_start_matches('/'))
}
