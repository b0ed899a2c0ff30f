//! Follow money from known attacker addresses through a transaction ledger, estimate profit and
//! export the flow graph as Graphviz DOT.
//!
//! cargo run --example taint_report > flow.dot

use std::collections::{BTreeSet, HashMap};

use rpclure::ledger::labels::LabelSet;
use rpclure::ledger::LedgerStore;
use rpclure::taint::dot::export_dot;
use rpclure::taint::report::estimate_profit;
use rpclure::taint::{trace, NodeClass};
use rpclure::types::Address;

const MARKETS: &str = include_str!("../fixtures/markets.csv");

fn tx(n: u8, from: &str, to: &str, ether: u64) -> String {
    format!(
        r#"{{"hash":"0x{}","from":"{from}","to":"{to}","value":"0x{:x}","block":{},"ts":{}}}"#,
        format!("{n:02x}").repeat(32),
        ether as u128 * 1_000_000_000_000_000_000,
        7_000_000 + n as u64,
        1_546_300_800 + n as u64 * 15,
    )
}

fn main() -> anyhow::Result<()> {
    let attacker = "0x63710c26a9be484581dcac1aacdd95ef628923ab";
    let partner = "0x1111111111111111111111111111111111111111";
    let mixer = "0x3333333333333333333333333333333333333333";
    let victim = "0x2222222222222222222222222222222222222222";
    let bystander = "0x4444444444444444444444444444444444444444";
    let binance = "0x3f5ce5fbfe3e9af3971dd833d26ba9b5c936f0be";

    let lines = [
        tx(1, victim, attacker, 40),
        tx(2, attacker, partner, 10),
        tx(3, attacker, mixer, 25),
        tx(4, victim, partner, 8),
        tx(5, partner, binance, 18),
        tx(6, mixer, binance, 25),
        tx(7, mixer, bystander, 1),
    ]
    .join("\n");
    let mut ledger = LedgerStore::new();
    ledger.import_transactions(lines.as_bytes())?;
    let labels = LabelSet::from_csv(MARKETS.as_bytes())?;

    let seeds: BTreeSet<Address> = [attacker.parse()?].into();
    let graph = trace(&seeds, &labels, &ledger, 3);
    for class in [NodeClass::Malicious, NodeClass::Suspicious, NodeClass::Unknown, NodeClass::Market] {
        let members: Vec<String> = graph.with_class(class).map(|a| a.to_string()).collect();
        eprintln!("{class:?}: {members:?}");
    }

    let group_of: HashMap<Address, u32> = seeds.iter().map(|a| (*a, 1)).collect();
    let report = estimate_profit(&graph, &ledger, "139.25".parse()?, &group_of);
    report.write_csv(std::io::stderr())?;

    print!("{}", export_dot(&graph));
    Ok(())
}
