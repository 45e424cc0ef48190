//! Client for the archive's public REST API: save-code-now requests and
//! identifier lookups.

mod retry;
mod transport;

use std::fmt;
use std::str::FromStr;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::swhid::{format_swhid, QualifiedSwhid};

pub use retry::{parse_retry_after, RetryPolicy};
pub use transport::{
    Exchange, HttpRequest, HttpResponse, Method, ReplayTransport, Transcript, Transport, TransportError,
    UreqTransport,
};

pub const DEFAULT_API_BASE: &str = "https://archive.softwareheritage.org/api/1/";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ClientError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("network error: {0}")]
    Network(String),
    #[error("rate limited{}", .retry_after.map(|d| format!(", retry after {}s", d.as_secs())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("client error {status}: {body}")]
    Client { status: u16, body: String },
    #[error("server error {status}: {body}")]
    Server { status: u16, body: String },
    #[error("unintelligible response: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VisitType {
    Git,
    Svn,
    Hg,
}

impl VisitType {
    pub fn as_str(self) -> &'static str {
        match self {
            VisitType::Git => "git",
            VisitType::Svn => "svn",
            VisitType::Hg => "hg",
        }
    }
}

impl fmt::Display for VisitType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VisitType {
    type Err = ClientError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "git" => Ok(VisitType::Git),
            "svn" => Ok(VisitType::Svn),
            "hg" => Ok(VisitType::Hg),
            other => Err(ClientError::InvalidRequest(format!("unsupported visit type {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SaveRequest {
    pub visit_type: VisitType,
    pub origin_url: String,
    /// Server-assigned id, once known.
    pub request_id: Option<u64>,
    /// Server-reported submission date, once known.
    pub submitted_at: Option<String>,
}

impl SaveRequest {
    /// `origin_url` must be an absolute URL with a host.
    pub fn new(visit_type: VisitType, origin_url: &str) -> Result<Self, ClientError> {
        let parsed = url::Url::parse(origin_url)
            .map_err(|e| ClientError::InvalidRequest(format!("origin {origin_url:?} is not an absolute URL: {e}")))?;
        if parsed.host().is_none() {
            return Err(ClientError::InvalidRequest(format!("origin {origin_url:?} has no host")));
        }
        Ok(SaveRequest { visit_type, origin_url: origin_url.to_owned(), request_id: None, submitted_at: None })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RequestState {
    Accepted,
    Pending,
    Rejected,
    Succeeded,
    Failed,
    NotFound,
    /// A state this client does not know, as sent by the server.
    Other(String),
}

impl fmt::Display for RequestState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RequestState::Accepted => f.write_str("accepted"),
            RequestState::Pending => f.write_str("pending"),
            RequestState::Rejected => f.write_str("rejected"),
            RequestState::Succeeded => f.write_str("succeeded"),
            RequestState::Failed => f.write_str("failed"),
            RequestState::NotFound => f.write_str("not-found"),
            RequestState::Other(s) => write!(f, "other({s})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SaveStatus {
    pub request_state: RequestState,
    pub task_state: Option<String>,
    pub request_id: Option<u64>,
    pub request_date: Option<String>,
    /// Response body exactly as received.
    pub raw: String,
}

impl SaveStatus {
    /// Maps one save-request record onto a status. Total over its input:
    /// missing or unexpected fields end up in `Other`.
    pub fn from_record(record: &Value, raw: String) -> SaveStatus {
        let field = |k: &str| record.get(k).and_then(Value::as_str).map(str::to_owned);
        let task_state = field("save_task_status");
        let request_state = match field("save_request_status").as_deref() {
            Some("pending") => RequestState::Pending,
            Some("rejected") => RequestState::Rejected,
            Some("accepted") => match task_state.as_deref() {
                Some("succeeded") => RequestState::Succeeded,
                Some("failed") => RequestState::Failed,
                _ => RequestState::Accepted,
            },
            Some(other) => RequestState::Other(other.to_owned()),
            None => RequestState::Other(String::new()),
        };
        SaveStatus {
            request_state,
            task_state,
            request_id: record.get("id").and_then(Value::as_u64),
            request_date: field("save_request_date"),
            raw,
        }
    }

    fn not_found(raw: String) -> SaveStatus {
        SaveStatus { request_state: RequestState::NotFound, task_state: None, request_id: None, request_date: None, raw }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct KnownResult {
    pub known: bool,
    pub resolved_url: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientConfig {
    pub base_api: String,
    pub auth_token: Option<String>,
    pub timeout: Duration,
    pub retry: RetryPolicy,
}

impl Default for ClientConfig {
    fn default() -> Self {
        ClientConfig {
            base_api: DEFAULT_API_BASE.to_owned(),
            auth_token: None,
            timeout: Duration::from_secs(30),
            retry: RetryPolicy::default(),
        }
    }
}

impl ClientConfig {
    pub fn validate(&self) -> Result<(), ClientError> {
        crate::resolver::check_base(&self.base_api).map_err(|e| ClientError::InvalidRequest(e.to_string()))?;
        if self.timeout.is_zero() {
            return Err(ClientError::InvalidRequest("timeout must be positive".into()));
        }
        self.retry.validate().map_err(ClientError::InvalidRequest)
    }
}

/// The API endpoints used by this client.
#[derive(Debug, Clone, Copy)]
pub enum Endpoint<'a> {
    Save { visit_type: VisitType, origin_url: &'a str },
    Resolve(&'a QualifiedSwhid),
}

impl Endpoint<'_> {
    pub fn url(&self, base_api: &str) -> String {
        match self {
            Endpoint::Save { visit_type, origin_url } => format!("{base_api}origin/save/{visit_type}/url/{origin_url}/"),
            Endpoint::Resolve(id) => format!("{base_api}resolve/{}/", format_swhid(id)),
        }
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d)
    }
}

pub struct ArchiveClient {
    config: ClientConfig,
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    // requests are refused locally until this instant after a 429
    not_before: Mutex<Option<Instant>>,
}

impl ArchiveClient {
    pub fn new(config: ClientConfig) -> Result<Self, ClientError> {
        Self::with_transport(config, Arc::new(UreqTransport::default()), Arc::new(ThreadSleeper))
    }

    pub fn with_transport(
        config: ClientConfig,
        transport: Arc<dyn Transport>,
        sleeper: Arc<dyn Sleeper>,
    ) -> Result<Self, ClientError> {
        config.validate()?;
        Ok(ArchiveClient { config, transport, sleeper, not_before: Mutex::new(None) })
    }

    pub fn config(&self) -> &ClientConfig {
        &self.config
    }

    fn request(&self, method: Method, url: String) -> HttpRequest {
        let mut headers = vec![("Accept".to_owned(), "application/json".to_owned())];
        if let Some(token) = &self.config.auth_token {
            headers.push(("Authorization".to_owned(), format!("Bearer {token}")));
        }
        HttpRequest { method, url, headers }
    }

    /// Sends with retries on network errors and 5xx. Any other response,
    /// 4xx included, is returned after a single attempt; 429 becomes
    /// `RateLimited`.
    fn execute(&self, request: &HttpRequest) -> Result<HttpResponse, ClientError> {
        {
            let guard = self.not_before.lock().expect("poisoned");
            if let Some(until) = *guard {
                let now = Instant::now();
                if now < until {
                    return Err(ClientError::RateLimited { retry_after: Some(until - now) });
                }
            }
        }
        let mut last = ClientError::Network("no attempt made".into());
        for attempt in 1..=self.config.retry.max_attempts {
            if attempt > 1 {
                self.sleeper.sleep(self.config.retry.delay(attempt - 1));
            }
            match self.transport.send(request, self.config.timeout) {
                Err(e) => last = ClientError::Network(e.0),
                Ok(resp) if resp.status == 429 => {
                    let retry_after = resp.header("retry-after").and_then(parse_retry_after);
                    if let Some(wait) = retry_after {
                        *self.not_before.lock().expect("poisoned") = Some(Instant::now() + wait);
                    }
                    return Err(ClientError::RateLimited { retry_after });
                }
                Ok(resp) if resp.status >= 500 => last = ClientError::Server { status: resp.status, body: resp.body },
                Ok(resp) => return Ok(resp),
            }
        }
        Err(last)
    }

    fn save_url(&self, req: &SaveRequest) -> String {
        Endpoint::Save { visit_type: req.visit_type, origin_url: &req.origin_url }.url(&self.config.base_api)
    }

    pub fn submit_save(&self, req: &SaveRequest) -> Result<SaveStatus, ClientError> {
        SaveRequest::new(req.visit_type, &req.origin_url)?;
        let resp = self.execute(&self.request(Method::Post, self.save_url(req)))?;
        match resp.status {
            200..=299 => {
                let value = parse_json(&resp.body)?;
                let record = latest_record(&value).ok_or_else(|| ClientError::Parse(resp.body.clone()))?;
                Ok(SaveStatus::from_record(record, resp.body))
            }
            status => Err(ClientError::Client { status, body: resp.body }),
        }
    }

    /// Current state of the most recent save request for the origin.
    pub fn poll_save(&self, req: &SaveRequest) -> Result<SaveStatus, ClientError> {
        SaveRequest::new(req.visit_type, &req.origin_url)?;
        let resp = self.execute(&self.request(Method::Get, self.save_url(req)))?;
        match resp.status {
            200..=299 => {
                let value = parse_json(&resp.body)?;
                match latest_record(&value) {
                    Some(record) => Ok(SaveStatus::from_record(record, resp.body)),
                    None if value.as_array().is_some_and(Vec::is_empty) => Ok(SaveStatus::not_found(resp.body)),
                    None => Err(ClientError::Parse(resp.body)),
                }
            }
            404 => Ok(SaveStatus::not_found(resp.body)),
            status => Err(ClientError::Client { status, body: resp.body }),
        }
    }

    /// Whether the archive resolves `id`.
    pub fn check_known(&self, id: &QualifiedSwhid) -> Result<KnownResult, ClientError> {
        let url = Endpoint::Resolve(id).url(&self.config.base_api);
        let resp = self.execute(&self.request(Method::Get, url))?;
        match resp.status {
            200..=299 => {
                let value = parse_json(&resp.body)?;
                let browse = value
                    .get("browse_url")
                    .and_then(Value::as_str)
                    .ok_or_else(|| ClientError::Parse(resp.body.clone()))?;
                Ok(KnownResult { known: true, resolved_url: Some(browse.to_owned()) })
            }
            404 => Ok(KnownResult { known: false, resolved_url: None }),
            status => Err(ClientError::Client { status, body: resp.body }),
        }
    }
}

fn parse_json(body: &str) -> Result<Value, ClientError> {
    serde_json::from_str(body).map_err(|_| ClientError::Parse(body.to_owned()))
}

/// A single record, or the most recently submitted one of a list.
fn latest_record(value: &Value) -> Option<&Value> {
    match value {
        Value::Object(_) => Some(value),
        Value::Array(items) => items
            .iter()
            .filter(|v| v.is_object())
            .max_by(|a, b| {
                let key = |v: &Value| (v.get("save_request_date").and_then(Value::as_str).map(str::to_owned), v.get("id").and_then(Value::as_u64));
                key(a).cmp(&key(b))
            }),
        _ => None,
    }
}
