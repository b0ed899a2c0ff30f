//! Run the gateway in front of an in-process mock node and poke it like a scanner would.
//! Each request is answered by forwarding, emulating or denying it, and every one is logged.
//!
//! cargo run --example honeypot_gateway

use std::sync::Arc;

use rpclure::gateway::server::RunningGateway;
use rpclure::gateway::{Gateway, HoneypotConfig, NdjsonLog};
use rpclure::node::mock::{load_rules, MockNode};
use rpclure::node::{BackendEndpoint, NodeClient};

const RULES: &str = include_str!("../fixtures/mock_node.ndjson");
const SEND: &str = include_str!("../fixtures/captured_send.json");

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let node = MockNode::spawn(load_rules(RULES.as_bytes())?).await?;
    let dir = tempfile::tempdir()?;
    let log_path = dir.path().join("honeypot.ndjson");

    let gateway = Gateway::new(HoneypotConfig::default(), NodeClient::new(BackendEndpoint::new(node.url())));
    let log = Arc::new(NdjsonLog::open(&log_path)?);
    let running = RunningGateway::spawn(Arc::new(gateway), log, "127.0.0.1:0".parse()?).await?;
    println!("gateway on {}, backend on {}", running.url(), node.url());

    let bodies = [
        r#"{"jsonrpc":"2.0","method":"web3_clientVersion","params":[],"id":1}"#,
        r#"{"jsonrpc":"2.0","method":"eth_accounts","params":[],"id":2}"#,
        r#"{"jsonrpc":"2.0","method":"personal_unlockAccount","params":["0xa33023b7c14638f3391d705c938ac506544b25c3","123456",0],"id":3}"#,
        SEND.trim(),
        r#"{"jsonrpc":"2.0","method":"admin_peers","params":[],"id":4}"#,
        r#"[{"jsonrpc":"2.0","method":"eth_blockNumber","id":5},{"jsonrpc":"2.0","method":"eth_coinbase","id":6}]"#,
        "{oops",
    ];
    let http = reqwest::Client::new();
    for body in bodies {
        let reply = http
            .post(running.url())
            .header("content-type", "application/json")
            .body(body)
            .send()
            .await?
            .text()
            .await?;
        println!("-> {body}\n<- {reply}");
    }
    running.shutdown().await?;

    println!("\nbackend saw {} call(s); log:", node.call_count());
    print!("{}", std::fs::read_to_string(&log_path)?);
    Ok(())
}
