//! Scripted stand-in for an Ethereum node, driven by an NDJSON fixture.
//!
//! Each fixture line is `{"method": ..., "params_pattern": ..., "response": ...}`.
//! `params_pattern` is optional; when present the request params must be JSON-equal to it.
//! `response` is one of `{"result": v}`, `{"error": e}` or `{"raw": "text"}` (sent verbatim,
//! useful for simulating a broken node). An optional `delay_ms` delays the answer.
//! The first matching rule wins; unmatched methods get a -32601 error.

use std::io::BufRead;
use std::net::SocketAddr;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::routing::post;
use axum::Router;
use serde::Deserialize;
use serde_json::{json, Value};
use tokio::net::TcpListener;
use tokio::sync::oneshot;

#[derive(Clone, Debug, Deserialize)]
pub struct MockRule {
    pub method: String,
    #[serde(default)]
    pub params_pattern: Option<Value>,
    pub response: Value,
    #[serde(default)]
    pub delay_ms: Option<u64>,
}

impl MockRule {
    pub fn result(method: &str, result: Value) -> Self {
        MockRule {
            method: method.into(),
            params_pattern: None,
            response: json!({ "result": result }),
            delay_ms: None,
        }
    }

    pub fn with_params(mut self, params: Value) -> Self {
        self.params_pattern = Some(params);
        self
    }

    fn matches(&self, method: &str, params: &Value) -> bool {
        self.method == method && self.params_pattern.as_ref().is_none_or(|p| p == params)
    }
}

/// Parses fixture lines; blank lines and `//` comments are skipped.
pub fn load_rules<R: BufRead>(reader: R) -> std::io::Result<Vec<MockRule>> {
    let mut rules = Vec::new();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("//") {
            continue;
        }
        let rule = serde_json::from_str(line)
            .map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))?;
        rules.push(rule);
    }
    Ok(rules)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecordedCall {
    pub method: String,
    pub params: Value,
}

struct MockState {
    rules: Vec<MockRule>,
    calls: Mutex<Vec<RecordedCall>>,
}

/// A running mock node. Dropping it shuts the server down.
pub struct MockNode {
    pub addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
}

impl MockNode {
    pub async fn spawn(rules: Vec<MockRule>) -> std::io::Result<MockNode> {
        let listener = TcpListener::bind("127.0.0.1:0").await?;
        let addr = listener.local_addr()?;
        let state = Arc::new(MockState {
            rules,
            calls: Mutex::new(Vec::new()),
        });
        let app = Router::new()
            .route("/", post(handle))
            .with_state(state.clone());
        let (tx, rx) = oneshot::channel::<()>();
        tokio::spawn(async move {
            let _ = axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await;
        });
        Ok(MockNode {
            addr,
            state,
            shutdown: Some(tx),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}/", self.addr)
    }

    pub fn calls(&self) -> Vec<RecordedCall> {
        self.state.calls.lock().expect("calls lock").clone()
    }

    pub fn call_count(&self) -> usize {
        self.state.calls.lock().expect("calls lock").len()
    }
}

impl Drop for MockNode {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
    }
}

async fn handle(State(state): State<Arc<MockState>>, body: Bytes) -> axum::response::Response {
    use axum::response::IntoResponse;

    let req: Value = match serde_json::from_slice(&body) {
        Ok(v) => v,
        Err(_) => {
            return json_response(json!({
                "jsonrpc": "2.0", "id": null,
                "error": {"code": -32700, "message": "parse error"}
            }))
        }
    };
    let method = req.get("method").and_then(Value::as_str).unwrap_or_default().to_string();
    let params = req.get("params").cloned().unwrap_or(Value::Null);
    let id = req.get("id").cloned().unwrap_or(Value::Null);
    state.calls.lock().expect("calls lock").push(RecordedCall {
        method: method.clone(),
        params: params.clone(),
    });

    let Some(rule) = state.rules.iter().find(|r| r.matches(&method, &params)) else {
        return json_response(json!({
            "jsonrpc": "2.0", "id": id,
            "error": {"code": -32601, "message": format!("the method {method} does not exist/is not available")}
        }));
    };
    if let Some(ms) = rule.delay_ms {
        tokio::time::sleep(Duration::from_millis(ms)).await;
    }
    if let Some(raw) = rule.response.get("raw").and_then(Value::as_str) {
        return raw.to_string().into_response();
    }
    let mut reply = json!({ "jsonrpc": "2.0", "id": id });
    if let Some(err) = rule.response.get("error") {
        reply["error"] = err.clone();
    } else {
        reply["result"] = rule.response.get("result").cloned().unwrap_or(Value::Null);
    }
    json_response(reply)
}

fn json_response(v: Value) -> axum::response::Response {
    use axum::response::IntoResponse;
    (
        [(axum::http::header::CONTENT_TYPE, "application/json")],
        serde_json::to_vec(&v).expect("serializable"),
    )
        .into_response()
}
