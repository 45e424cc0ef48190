//! HTTP plumbing behind the archive client: a live transport and a replay
//! transport driven by recorded transcripts.

use std::collections::VecDeque;
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpResponse {
    pub status: u16,
    #[serde(default)]
    pub headers: Vec<(String, String)>,
    #[serde(default)]
    pub body: String,
}

impl HttpResponse {
    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers.iter().find(|(k, _)| k.eq_ignore_ascii_case(name)).map(|(_, v)| v.as_str())
    }
}

/// A failure to obtain any response at all (DNS, connect, timeout, ...).
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct TransportError(pub String);

pub trait Transport: Send + Sync {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError>;
}

/// Live HTTPS transport.
pub struct UreqTransport {
    agent: ureq::Agent,
}

impl Default for UreqTransport {
    fn default() -> Self {
        let config = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .user_agent(concat!("swhid/", env!("CARGO_PKG_VERSION")))
            .build();
        UreqTransport { agent: config.into() }
    }
}

impl Transport for UreqTransport {
    fn send(&self, request: &HttpRequest, timeout: Duration) -> Result<HttpResponse, TransportError> {
        let net = |e: ureq::Error| TransportError(e.to_string());
        let result = match request.method {
            Method::Get => {
                let mut b = self.agent.get(&request.url).config().timeout_global(Some(timeout)).build();
                for (k, v) in &request.headers {
                    b = b.header(k, v);
                }
                b.call()
            }
            Method::Post => {
                let mut b = self.agent.post(&request.url).config().timeout_global(Some(timeout)).build();
                for (k, v) in &request.headers {
                    b = b.header(k, v);
                }
                b.send_empty()
            }
        };
        let mut response = result.map_err(net)?;
        let status = response.status().as_u16();
        let headers = response
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.as_str().to_owned(), v.to_str().ok()?.to_owned())))
            .collect();
        let body = response.body_mut().read_to_string().map_err(net)?;
        Ok(HttpResponse { status, headers, body })
    }
}

/// One request/response pair of a transcript. A `response` of `None`
/// stands for a network failure.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exchange {
    pub method: Method,
    pub url: String,
    #[serde(default)]
    pub response: Option<HttpResponse>,
    #[serde(default)]
    pub network_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    #[serde(default)]
    pub description: String,
    pub exchanges: Vec<Exchange>,
}

/// Replays a transcript in order, failing on any request that does not
/// match the next recorded one.
pub struct ReplayTransport {
    pending: Mutex<VecDeque<Exchange>>,
    seen: Mutex<Vec<HttpRequest>>,
}

impl ReplayTransport {
    pub fn new(transcript: Transcript) -> Self {
        ReplayTransport { pending: Mutex::new(transcript.exchanges.into()), seen: Mutex::new(Vec::new()) }
    }

    pub fn from_json(text: &str) -> serde_json::Result<Self> {
        Ok(Self::new(serde_json::from_str(text)?))
    }

    /// Requests issued so far.
    pub fn requests(&self) -> Vec<HttpRequest> {
        self.seen.lock().expect("poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.pending.lock().expect("poisoned").len()
    }
}

impl Transport for ReplayTransport {
    fn send(&self, request: &HttpRequest, _timeout: Duration) -> Result<HttpResponse, TransportError> {
        self.seen.lock().expect("poisoned").push(request.clone());
        let next = self
            .pending
            .lock()
            .expect("poisoned")
            .pop_front()
            .ok_or_else(|| TransportError(format!("transcript exhausted at {} {}", method_name(request.method), request.url)))?;
        if next.method != request.method || next.url != request.url {
            return Err(TransportError(format!(
                "transcript expected {} {}, got {} {}",
                method_name(next.method),
                next.url,
                method_name(request.method),
                request.url
            )));
        }
        match (next.response, next.network_error) {
            (Some(resp), _) => Ok(resp),
            (None, Some(err)) => Err(TransportError(err)),
            (None, None) => Err(TransportError("connection reset".into())),
        }
    }
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Get => "GET",
        Method::Post => "POST",
    }
}
