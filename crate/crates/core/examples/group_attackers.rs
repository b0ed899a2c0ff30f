//! Group attacker addresses found in a honeypot log and summarize what each group did.
//!
//! cargo run --example group_attackers -- path/to/honeypot.ndjson
//!
//! Without an argument a small synthetic log is used.

use std::io::BufReader;

use rpclure::gateway::record::read_log;
use rpclure::gateway::LogRecord;
use rpclure::miner::{analyze, BehaviorOptions, GroupingOptions};
use rpclure::wire::SelectorRegistry;

fn synthetic() -> Vec<LogRecord> {
    let line = |ms: u64, ip: &str, method: &str, params: &str, id: u32| {
        format!(
            r#"{{"ts":"2019-01-01T00:00:{:02}.{:03}Z","ip":"{ip}","port":40000,"method":"{method}","params":{params},"id":{id},"action":"emulate","response":""}}"#,
            ms / 1000,
            ms % 1000
        )
    };
    let a = "0x63710c26a9be484581dcac1aacdd95ef628923ab";
    let b = "0x1111111111111111111111111111111111111111";
    let c = "0x2222222222222222222222222222222222222222";
    let send = |to: &str| format!(r#"[{{"from":"0xa33023b7c14638f3391d705c938ac506544b25c3","to":"{to}","value":"0x1","gasPrice":"0x199c82cc00"}}]"#);
    let text = [
        line(0, "198.51.100.7", "eth_accounts", "[]", 1),
        line(100, "198.51.100.7", "eth_getBalance", r#"["0xa33023b7c14638f3391d705c938ac506544b25c3","latest"]"#, 2),
        line(200, "198.51.100.7", "eth_sendTransaction", &send(a), 739296),
        line(300, "198.51.100.7", "eth_sendTransaction", &send(b), 739296),
        line(5000, "203.0.113.9", "personal_unlockAccount", r#"["0xa33023b7c14638f3391d705c938ac506544b25c3","hunter2",0]"#, 7),
        line(5100, "203.0.113.9", "eth_sendTransaction", &send(c), 8),
    ]
    .join("\n");
    read_log(text.as_bytes()).expect("in-memory log").records
}

fn main() -> anyhow::Result<()> {
    let records = match std::env::args().nth(1) {
        Some(path) => {
            let log = read_log(BufReader::new(std::fs::File::open(path)?))?;
            if !log.malformed.is_empty() {
                eprintln!("skipped {} malformed line(s)", log.malformed.len());
            }
            log.records
        }
        None => synthetic(),
    };

    let a = analyze(&records, &SelectorRegistry::with_defaults(), &GroupingOptions::default(), &BehaviorOptions::default());
    println!("{} records, {} target address(es), {} group(s)", records.len(), a.extraction.targets.len(), a.grouping.groups.len());
    for (g, b) in a.grouping.groups.iter().zip(&a.behaviors) {
        println!("group {} ({} address(es), first seen {})", g.group_id, g.addresses.len(), g.first_seen);
        for addr in &g.addresses {
            println!("  {addr}");
        }
        println!("  phases: {:?}", b.phases);
        if b.bruteforce.detected {
            println!("  password guesses: {:?}", b.bruteforce.passwords);
        }
        if let (Some(lo), Some(hi)) = (b.gas.min_ratio, b.gas.max_ratio) {
            println!("  gas price {lo:.1}x to {hi:.1}x the baseline");
        }
    }
    Ok(())
}
