//! Replay every simulated attacker campaign against a local gateway and compare what the
//! miner recovers from the log with the simulator's ground truth.
//!
//! cargo run --example replay_scenario [-- seed]

use std::sync::Arc;

use rpclure::gateway::record::read_log;
use rpclure::gateway::server::RunningGateway;
use rpclure::gateway::{Gateway, HoneypotConfig, NdjsonLog};
use rpclure::miner::{analyze, BehaviorOptions, GroupingOptions};
use rpclure::node::mock::{load_rules, MockNode};
use rpclure::node::{BackendEndpoint, NodeClient};
use rpclure::sim::{run_scenario, Scenario, ScenarioKind};
use rpclure::wire::SelectorRegistry;

const RULES: &str = include_str!("../fixtures/mock_node.ndjson");

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let seed = std::env::args().nth(1).map(|s| s.parse()).transpose()?.unwrap_or(7);
    let node = MockNode::spawn(load_rules(RULES.as_bytes())?).await?;
    let dir = tempfile::tempdir()?;

    for kind in ScenarioKind::ALL {
        let log_path = dir.path().join(format!("{kind}.ndjson"));
        let gateway = Gateway::new(HoneypotConfig::default(), NodeClient::new(BackendEndpoint::new(node.url())));
        let log = Arc::new(NdjsonLog::open(&log_path)?);
        let running = RunningGateway::spawn(Arc::new(gateway), log, "127.0.0.1:0".parse()?).await?;

        let (trace, truth) = run_scenario(&Scenario::new(kind, seed), &running.url()).await;
        running.shutdown().await?;
        let records = read_log(std::io::BufReader::new(std::fs::File::open(&log_path)?))?.records;
        let a = analyze(&records, &SelectorRegistry::with_defaults(), &GroupingOptions::default(), &BehaviorOptions::default());

        println!("{kind}: {} requests sent, {} logged, complete={}", trace.entries.len(), records.len(), trace.complete);
        println!("  truth:    {} attacker(s), phases {:?}", truth.attackers.len(), truth.phases);
        println!("  recovered {} group(s)", a.grouping.groups.len());
        for b in &a.behaviors {
            let polling = if b.polling.detected { format!("{:.1}/s", b.polling.peak_rate) } else { "none".into() };
            println!(
                "    group {}: phases {:?}, polling {polling}, {} passwords, {} zero-gas tx, fan-in from {} senders",
                b.group_id,
                b.phases.keys().collect::<Vec<_>>(),
                b.bruteforce.passwords.len(),
                b.zero_gas.len(),
                b.airdrop_fanin.distinct_senders,
            );
        }
    }
    Ok(())
}
