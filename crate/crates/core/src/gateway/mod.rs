//! Network-facing JSON-RPC front end: answers probes, emulates value-moving calls,
//! relays whitelisted read-only calls to the backend node, and logs every request object.

pub mod config;
pub mod emulate;
pub mod policy;
pub mod record;
pub mod server;

use std::collections::HashMap;
use std::net::SocketAddr;
use std::sync::Mutex;

use chrono::{SubsecRound, Utc};
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::Serialize;
use serde_json::value::RawValue;
use serde_json::Value;

pub use config::HoneypotConfig;
pub use policy::{classify_method, Policy, PolicyAction};
pub use record::{LogRecord, NdjsonLog, PARSE_ERROR_METHOD};

use crate::node::{Backend, Reply};
use record::{raw_from_value, raw_minified};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct RpcError {
    pub code: i64,
    pub message: String,
}

impl RpcError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        RpcError {
            code,
            message: message.into(),
        }
    }

    pub fn invalid_params(message: impl Into<String>) -> Self {
        Self::new(INVALID_PARAMS, message)
    }
}

/// A well-formed request object.
#[derive(Debug)]
pub struct RpcRequest {
    pub method: String,
    pub params: Box<RawValue>,
    pub id: Box<RawValue>,
}

/// One element of the incoming body after structural validation.
#[derive(Debug)]
enum Incoming {
    Call(RpcRequest),
    Invalid {
        code: i64,
        message: &'static str,
        id: Box<RawValue>,
        /// What to keep in the log's `params` field.
        evidence: Box<RawValue>,
    },
}

fn null_raw() -> Box<RawValue> {
    RawValue::from_string("null".into()).expect("null is valid JSON")
}

fn valid_id(raw: &RawValue) -> bool {
    matches!(raw.get().as_bytes().first(), Some(b'"' | b'-' | b'0'..=b'9' | b'n'))
}

fn interpret(element: &RawValue) -> Incoming {
    let invalid = |id: Box<RawValue>| Incoming::Invalid {
        code: INVALID_REQUEST,
        message: "invalid request",
        id,
        evidence: raw_minified(element),
    };
    if !element.get().starts_with('{') {
        return invalid(null_raw());
    }
    let Ok(obj) = serde_json::from_str::<HashMap<String, Box<RawValue>>>(element.get()) else {
        return invalid(null_raw());
    };
    let id = match obj.get("id") {
        None => null_raw(),
        Some(raw) if valid_id(raw) => raw_minified(raw),
        Some(_) => return invalid(null_raw()),
    };
    if let Some(version) = obj.get("jsonrpc") {
        if version.get() != "\"2.0\"" {
            return invalid(id);
        }
    }
    let method = obj
        .get("method")
        .and_then(|m| serde_json::from_str::<String>(m.get()).ok())
        .filter(|m| !m.is_empty());
    let Some(method) = method else {
        return invalid(id);
    };
    let params = obj
        .get("params")
        .map(|p| raw_minified(p))
        .unwrap_or_else(|| RawValue::from_string("[]".into()).expect("valid"));
    Incoming::Call(RpcRequest { method, params, id })
}

/// Splits a body into request objects. `Err` means the body was not JSON at all.
fn split_body(body: &[u8]) -> Result<(bool, Vec<Incoming>), ()> {
    let text = std::str::from_utf8(body).map_err(|_| ())?;
    let root: &RawValue = serde_json::from_str(text).map_err(|_| ())?;
    if root.get().starts_with('[') {
        let elements: Vec<&RawValue> = serde_json::from_str(root.get()).map_err(|_| ())?;
        if elements.is_empty() {
            let empty = Incoming::Invalid {
                code: INVALID_REQUEST,
                message: "empty batch",
                id: null_raw(),
                evidence: RawValue::from_string("[]".into()).expect("valid"),
            };
            return Ok((false, vec![empty]));
        }
        Ok((true, elements.into_iter().map(interpret).collect()))
    } else {
        Ok((false, vec![interpret(root)]))
    }
}

#[derive(Serialize)]
struct ResponseBody<'a> {
    jsonrpc: &'static str,
    id: &'a RawValue,
    #[serde(skip_serializing_if = "Option::is_none")]
    result: Option<&'a Value>,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a Value>,
}

fn response_text(id: &RawValue, outcome: &Result<Value, Value>) -> Box<RawValue> {
    let body = match outcome {
        Ok(result) => ResponseBody {
            jsonrpc: "2.0",
            id,
            result: Some(result),
            error: None,
        },
        Err(error) => ResponseBody {
            jsonrpc: "2.0",
            id,
            result: None,
            error: Some(error),
        },
    };
    serde_json::value::to_raw_value(&body).expect("response serializes")
}

fn error_value(e: &RpcError) -> Value {
    serde_json::to_value(e).expect("RpcError serializes")
}

fn summarize_result(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// What the gateway produced for one HTTP body.
#[derive(Debug)]
pub struct Handled {
    pub response: Vec<u8>,
    pub records: Vec<LogRecord>,
}

pub struct Gateway<B> {
    config: HoneypotConfig,
    backend: B,
    rng: Mutex<StdRng>,
}

impl<B: Backend> Gateway<B> {
    pub fn new(config: HoneypotConfig, backend: B) -> Self {
        Gateway {
            config,
            backend,
            rng: Mutex::new(StdRng::from_entropy()),
        }
    }

    pub fn with_seed(config: HoneypotConfig, backend: B, seed: u64) -> Self {
        Gateway {
            config,
            backend,
            rng: Mutex::new(StdRng::seed_from_u64(seed)),
        }
    }

    pub fn config(&self) -> &HoneypotConfig {
        &self.config
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }

    /// Handles one HTTP body from `peer`. Never fails: every problem becomes a JSON-RPC error
    /// response, and every request object yields exactly one log record.
    pub async fn handle_request(&self, raw_body: &[u8], peer: SocketAddr) -> Handled {
        let ts = Utc::now().trunc_subsecs(3);
        let record = |method: String, params: Box<RawValue>, id: Box<RawValue>, action, summary| LogRecord {
            timestamp: ts,
            source_ip: peer.ip(),
            source_port: peer.port(),
            method,
            params_raw: params,
            request_id: id,
            action,
            response_summary: summary,
        };

        let Ok((is_batch, items)) = split_body(raw_body) else {
            let err = RpcError::new(PARSE_ERROR, "parse error");
            let body = response_text(&null_raw(), &Err(error_value(&err)));
            let evidence = raw_from_value(&Value::String(String::from_utf8_lossy(raw_body).into_owned()));
            return Handled {
                response: body.get().as_bytes().to_vec(),
                records: vec![record(
                    PARSE_ERROR_METHOD.into(),
                    evidence,
                    null_raw(),
                    PolicyAction::Deny,
                    format!("error {PARSE_ERROR}"),
                )],
            };
        };

        let mut responses = Vec::with_capacity(items.len());
        let mut records = Vec::with_capacity(items.len());
        for item in items {
            match item {
                Incoming::Invalid {
                    code,
                    message,
                    id,
                    evidence,
                } => {
                    let err = RpcError::new(code, message);
                    responses.push(response_text(&id, &Err(error_value(&err))));
                    records.push(record(
                        PARSE_ERROR_METHOD.into(),
                        evidence,
                        id,
                        PolicyAction::Deny,
                        format!("error {code}"),
                    ));
                }
                Incoming::Call(req) => {
                    let (action, outcome, summary) = self.dispatch(&req).await;
                    responses.push(response_text(&req.id, &outcome));
                    records.push(record(req.method, req.params, req.id, action, summary));
                }
            }
        }

        let response = if is_batch {
            let parts: Vec<&str> = responses.iter().map(|r| r.get()).collect();
            format!("[{}]", parts.join(",")).into_bytes()
        } else {
            responses[0].get().as_bytes().to_vec()
        };
        Handled { response, records }
    }

    async fn dispatch(&self, req: &RpcRequest) -> (PolicyAction, Result<Value, Value>, String) {
        let action = self.config.policy.classify(&req.method);
        match action {
            PolicyAction::Deny => {
                let err = RpcError::new(
                    METHOD_NOT_FOUND,
                    format!("the method {} does not exist/is not available", req.method),
                );
                (action, Err(error_value(&err)), format!("error {METHOD_NOT_FOUND}"))
            }
            PolicyAction::Emulate => {
                let params = serde_json::from_str::<Value>(req.params.get())
                    .map_err(|_| RpcError::invalid_params("params could not be decoded"));
                let result = params.and_then(|p| {
                    let mut rng = self.rng.lock().unwrap_or_else(|e| e.into_inner());
                    emulate::emulate(&req.method, &p, &self.config, &mut *rng)
                });
                match result {
                    Ok(v) => {
                        let summary = summarize_result(&v);
                        (action, Ok(v), summary)
                    }
                    Err(e) => {
                        let summary = format!("error {}", e.code);
                        (action, Err(error_value(&e)), summary)
                    }
                }
            }
            PolicyAction::Forward => match self.backend.forward(&req.method, &req.params).await {
                Reply::Result(v) => (action, Ok(v), "forwarded".into()),
                Reply::Error(e) => {
                    let code = e.get("code").and_then(Value::as_i64).unwrap_or(0);
                    (action, Err(e), format!("forwarded error {code}"))
                }
            },
        }
    }
}
