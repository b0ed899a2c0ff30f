mod common;

use std::sync::Arc;
use std::time::Duration;

use serde_json::{json, Value};

use rpclure::gateway::server::RunningGateway;
use rpclure::gateway::{Gateway, HoneypotConfig, NdjsonLog, PolicyAction, PARSE_ERROR_METHOD};
use rpclure::node::mock::MockRule;
use rpclure::node::{BackendEndpoint, NodeClient, Reply, TransportError, INTERNAL_ERROR};

use common::{default_rules, Harness, CAPTURED_SEND};

async fn post(url: &str, body: impl Into<String>) -> Value {
    let text = reqwest::Client::new()
        .post(url)
        .header("content-type", "application/json")
        .body(body.into())
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    serde_json::from_str(&text).unwrap()
}

fn closed_port_url() -> String {
    let l = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = l.local_addr().unwrap().port();
    drop(l);
    format!("http://127.0.0.1:{port}/")
}

#[tokio::test]
async fn captured_send_is_emulated_and_logged() {
    let h = Harness::start(default_rules()).await;
    let resp = post(&h.url(), CAPTURED_SEND).await;
    assert_eq!(resp["id"], json!(739296));
    let hash = resp["result"].as_str().unwrap();
    assert_eq!(hash.len(), 66);
    assert_eq!(h.node.call_count(), 0);

    let recs = h.records();
    assert_eq!(recs.len(), 1);
    let r = &recs[0];
    assert_eq!(r.method, "eth_sendTransaction");
    assert_eq!(r.action, PolicyAction::Emulate);
    assert_eq!(r.request_id.get(), "739296");
    assert_eq!(r.source_ip.to_string(), "127.0.0.1");
    let params: Value = serde_json::from_str(r.params_raw.get()).unwrap();
    assert_eq!(params[0]["to"], "0x63710c26a9be484581dcac1aacdd95ef628923ab");
    assert_eq!(params[0]["gasPrice"], "0x199c82cc00");
    assert_eq!(r.response_summary, hash);

    let line = std::fs::read_to_string(&h.log_path).unwrap();
    let v: Value = serde_json::from_str(line.trim()).unwrap();
    let ts = v["ts"].as_str().unwrap();
    assert_eq!(ts.len(), "2019-01-01T00:00:00.000Z".len(), "{ts}");
    assert!(ts.ends_with('Z'));
    for key in ["ts", "ip", "port", "method", "params", "id", "action", "response"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[tokio::test]
async fn whitelisted_calls_are_forwarded_verbatim() {
    let h = Harness::start(default_rules()).await;
    let resp = post(&h.url(), r#"{"jsonrpc":"2.0","method":"web3_clientVersion","params":[],"id":"abc"}"#).await;
    assert_eq!(resp["result"], "Geth/v1.8.22-stable/linux-amd64/go1.11.5");
    assert_eq!(resp["id"], "abc");
    let calls = h.node.calls();
    assert_eq!(calls.len(), 1);
    assert_eq!(calls[0].method, "web3_clientVersion");
    assert_eq!(h.records()[0].action, PolicyAction::Forward);
}

#[tokio::test]
async fn unknown_methods_are_denied() {
    let h = Harness::start(default_rules()).await;
    let resp = post(&h.url(), r#"{"jsonrpc":"2.0","method":"admin_peers","params":[],"id":1}"#).await;
    assert_eq!(resp["error"]["code"], -32601);
    assert_eq!(h.node.call_count(), 0);
    assert_eq!(h.records()[0].action, PolicyAction::Deny);
}

#[tokio::test]
async fn batch_preserves_order() {
    let h = Harness::start(default_rules()).await;
    let body = json!([
        {"jsonrpc":"2.0","method":"eth_accounts","params":[],"id":1},
        {"jsonrpc":"2.0","method":"net_version","params":[],"id":2},
        {"jsonrpc":"2.0","method":"admin_nodeInfo","params":[],"id":3},
        42,
    ]);
    let resp = post(&h.url(), body.to_string()).await;
    let arr = resp.as_array().unwrap();
    assert_eq!(arr.len(), 4);
    assert_eq!(arr[0]["result"], json!(["0xa33023b7c14638f3391d705c938ac506544b25c3"]));
    assert_eq!(arr[1]["result"], "1");
    assert_eq!(arr[2]["error"]["code"], -32601);
    assert_eq!(arr[3]["error"]["code"], -32600);
    let ids: Vec<&Value> = arr.iter().map(|r| &r["id"]).collect();
    assert_eq!(ids, [&json!(1), &json!(2), &json!(3), &Value::Null]);
    let recs = h.records();
    assert_eq!(recs.len(), 4);
    assert_eq!(recs[3].method, PARSE_ERROR_METHOD);
}

#[tokio::test]
async fn malformed_bodies() {
    let h = Harness::start(default_rules()).await;
    assert_eq!(post(&h.url(), "{not json").await["error"]["code"], -32700);
    assert_eq!(post(&h.url(), "[]").await["error"]["code"], -32600);
    assert_eq!(post(&h.url(), r#"{"jsonrpc":"1.0","method":"x","id":1}"#).await["error"]["code"], -32600);
    assert_eq!(post(&h.url(), r#"{"jsonrpc":"2.0","id":1}"#).await["error"]["code"], -32600);
    let bad = post(&h.url(), r#"{"jsonrpc":"2.0","method":"eth_sendTransaction","params":[],"id":1}"#).await;
    assert_eq!(bad["error"]["code"], -32602);
    let recs = h.records();
    assert_eq!(recs.len(), 5);
    assert_eq!(recs[0].method, PARSE_ERROR_METHOD);
    assert_eq!(recs[0].params_raw.get(), r#""{not json""#);
}

#[tokio::test]
async fn offline_backend_yields_internal_error() {
    let dir = tempfile::tempdir().unwrap();
    let log_path = dir.path().join("log.ndjson");
    let client = NodeClient::new(
        BackendEndpoint::new(closed_port_url())
            .with_timeout(Duration::from_millis(500))
            .with_retries(0),
    );
    let gw = Arc::new(Gateway::with_seed(HoneypotConfig::default(), client, 1));
    let log = Arc::new(NdjsonLog::open(&log_path).unwrap());
    let running = RunningGateway::spawn(gw, log, "127.0.0.1:0".parse().unwrap()).await.unwrap();
    let resp = post(&running.url(), r#"{"jsonrpc":"2.0","method":"eth_blockNumber","params":[],"id":9}"#).await;
    assert_eq!(resp["error"]["code"], INTERNAL_ERROR);
    assert_eq!(resp["id"], 9);
    // emulated calls keep working
    let resp = post(&running.url(), r#"{"jsonrpc":"2.0","method":"eth_coinbase","params":[],"id":10}"#).await;
    assert_eq!(resp["result"], "0xa33023b7c14638f3391d705c938ac506544b25c3");
    running.shutdown().await.unwrap();
    assert_eq!(std::fs::read_to_string(&log_path).unwrap().lines().count(), 2);
}

#[tokio::test]
async fn config_overrides_policy() {
    let cfg = HoneypotConfig::from_toml_str(include_str!("../fixtures/honeypot.toml")).unwrap();
    assert_eq!(cfg.policy.classify("eth_mining"), PolicyAction::Forward);
    assert_eq!(cfg.policy.classify("admin_peers"), PolicyAction::Deny);
    assert_eq!(cfg.policy.classify("eth_sendTransaction"), PolicyAction::Emulate);
    assert!(HoneypotConfig::from_toml_str("listen_prot = 1").is_err());
}

#[tokio::test]
async fn node_client_pass_through() {
    let node = rpclure::node::mock::MockNode::spawn(vec![
        MockRule::result("eth_blockNumber", json!("0x10")),
        MockRule::result("eth_getBalance", json!("0x1")).with_params(json!(["0xab", "latest"])),
        serde_json::from_value(json!({"method":"web3_clientVersion","response":{"raw":"garbage"}})).unwrap(),
        serde_json::from_value(json!({"method":"eth_chainId","response":{"error":{"code":-32000,"message":"nope"}}})).unwrap(),
    ])
    .await
    .unwrap();
    let client = NodeClient::new(BackendEndpoint::new(node.url()));
    assert_eq!(client.call_value("eth_blockNumber", &json!([])).await.unwrap(), Reply::Result(json!("0x10")));
    assert_eq!(
        client.call_value("eth_getBalance", &json!(["0xab", "latest"])).await.unwrap(),
        Reply::Result(json!("0x1"))
    );
    assert_eq!(
        client.call_value("eth_getBalance", &json!(["0xcd", "latest"])).await.unwrap().error_code(),
        Some(-32601)
    );
    assert_eq!(
        client.call_value("eth_chainId", &json!([])).await.unwrap(),
        Reply::Error(json!({"code": -32000, "message": "nope"}))
    );
    assert!(matches!(
        client.call_value("web3_clientVersion", &json!([])).await,
        Err(TransportError::Malformed(_))
    ));
    assert!(!client.health_check().await);
    assert_eq!(node.calls()[1].params, json!(["0xab", "latest"]));

    let healthy = rpclure::node::mock::MockNode::spawn(default_rules()).await.unwrap();
    assert!(NodeClient::new(BackendEndpoint::new(healthy.url())).health_check().await);

    let offline = NodeClient::new(BackendEndpoint::new(closed_port_url()).with_retries(2));
    let params = serde_json::value::to_raw_value(&json!([])).unwrap();
    assert_eq!(offline.forward("eth_blockNumber", &params).await.error_code(), Some(INTERNAL_ERROR));
    assert!(!offline.health_check().await);
}
