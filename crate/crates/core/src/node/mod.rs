//! JSON-RPC client toward the backend Ethereum node.

pub mod mock;

use std::future::Future;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::{json, Value};
use thiserror::Error;

/// Internal JSON-RPC error code for transport or backend failures.
pub const INTERNAL_ERROR: i64 = -32603;

#[derive(Clone, Debug)]
pub struct BackendEndpoint {
    pub url: String,
    pub timeout: Duration,
    pub max_retries: u32,
}

impl BackendEndpoint {
    pub fn new(url: impl Into<String>) -> Self {
        BackendEndpoint {
            url: url.into(),
            timeout: Duration::from_secs(5),
            max_retries: 1,
        }
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        assert!(!timeout.is_zero(), "backend timeout must be positive");
        self.timeout = timeout;
        self
    }

    pub fn with_retries(mut self, max_retries: u32) -> Self {
        self.max_retries = max_retries;
        self
    }
}

/// A backend answer: either the `result` member or the `error` member, verbatim.
#[derive(Clone, Debug, PartialEq)]
pub enum Reply {
    Result(Value),
    Error(Value),
}

impl Reply {
    pub fn internal_error(message: impl Into<String>) -> Reply {
        Reply::Error(json!({ "code": INTERNAL_ERROR, "message": message.into() }))
    }

    pub fn error_code(&self) -> Option<i64> {
        match self {
            Reply::Error(e) => e.get("code").and_then(Value::as_i64),
            Reply::Result(_) => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum TransportError {
    #[error("request to backend failed: {0}")]
    Http(#[from] reqwest::Error),
    #[error("backend replied with HTTP {0}")]
    Status(u16),
    #[error("malformed backend reply: {0}")]
    Malformed(String),
}

impl TransportError {
    /// Transport-level failures are retried; malformed replies are answers and are not.
    fn retryable(&self) -> bool {
        !matches!(self, TransportError::Malformed(_))
    }
}

/// Anything the gateway can relay whitelisted calls to.
pub trait Backend: Send + Sync + 'static {
    fn forward(&self, method: &str, params: &RawValue) -> impl Future<Output = Reply> + Send;
}

#[derive(Serialize)]
struct OutgoingCall<'a> {
    jsonrpc: &'static str,
    id: u64,
    method: &'a str,
    params: &'a RawValue,
}

pub struct NodeClient {
    endpoint: BackendEndpoint,
    http: reqwest::Client,
    next_id: AtomicU64,
}

impl NodeClient {
    pub fn new(endpoint: BackendEndpoint) -> Self {
        let http = reqwest::Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .expect("reqwest client without TLS always builds");
        NodeClient {
            endpoint,
            http,
            next_id: AtomicU64::new(1),
        }
    }

    pub fn endpoint(&self) -> &BackendEndpoint {
        &self.endpoint
    }

    async fn call_once(&self, method: &str, params: &RawValue) -> Result<Reply, TransportError> {
        let body = OutgoingCall {
            jsonrpc: "2.0",
            id: self.next_id.fetch_add(1, Ordering::Relaxed),
            method,
            params,
        };
        let resp = self.http.post(&self.endpoint.url).json(&body).send().await?;
        let status = resp.status();
        let bytes = resp.bytes().await?;
        let parsed: Value = match serde_json::from_slice(&bytes) {
            Ok(v) => v,
            Err(_) if !status.is_success() => return Err(TransportError::Status(status.as_u16())),
            Err(e) => return Err(TransportError::Malformed(e.to_string())),
        };
        let obj = parsed
            .as_object()
            .ok_or_else(|| TransportError::Malformed("reply is not an object".into()))?;
        if let Some(err) = obj.get("error") {
            return Ok(Reply::Error(err.clone()));
        }
        match obj.get("result") {
            Some(result) => Ok(Reply::Result(result.clone())),
            None => Err(TransportError::Malformed("reply has neither result nor error".into())),
        }
    }

    /// One logical call, retrying transport failures up to `max_retries` times.
    pub async fn call(&self, method: &str, params: &RawValue) -> Result<Reply, TransportError> {
        let mut attempt = 0;
        loop {
            match self.call_once(method, params).await {
                Err(e) if e.retryable() && attempt < self.endpoint.max_retries => {
                    attempt += 1;
                    tracing::debug!(method, attempt, error = %e, "retrying backend call");
                }
                other => return other,
            }
        }
    }

    pub async fn call_value(&self, method: &str, params: &Value) -> Result<Reply, TransportError> {
        let raw = serde_json::value::to_raw_value(params).expect("Value always serializes");
        self.call(method, &raw).await
    }

    /// Relays a call; transport failures become a synthetic -32603 error object.
    pub async fn forward(&self, method: &str, params: &RawValue) -> Reply {
        match self.call(method, params).await {
            Ok(reply) => reply,
            Err(e) => Reply::internal_error(e.to_string()),
        }
    }

    /// True iff `web3_clientVersion` answers with a string result within the timeout.
    pub async fn health_check(&self) -> bool {
        let params = RawValue::from_string("[]".into()).expect("valid json");
        matches!(
            self.call("web3_clientVersion", &params).await,
            Ok(Reply::Result(Value::String(_)))
        )
    }
}

impl Backend for NodeClient {
    async fn forward(&self, method: &str, params: &RawValue) -> Reply {
        NodeClient::forward(self, method, params).await
    }
}
