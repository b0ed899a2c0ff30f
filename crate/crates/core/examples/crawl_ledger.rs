//! Crawl a block range from a node into NDJSON, then import it into a deduplicating ledger.
//! A second crawl over the same range resumes from the checkpoint and fetches nothing.
//!
//! cargo run --example crawl_ledger

use serde_json::json;

use rpclure::ledger::{crawl, CrawlOptions, LedgerStore};
use rpclure::node::mock::{MockNode, MockRule};
use rpclure::node::{BackendEndpoint, NodeClient};

fn block(n: u64, txs: &[(u8, u8, u64)]) -> MockRule {
    let txs: Vec<_> = txs
        .iter()
        .enumerate()
        .map(|(i, (from, to, wei))| {
            json!({
                "hash": format!("0x{:02x}{}", n, format!("{i:02x}").repeat(31)),
                "from": format!("0x{}", format!("{from:02x}").repeat(20)),
                "to": format!("0x{}", format!("{to:02x}").repeat(20)),
                "value": format!("0x{wei:x}"),
            })
        })
        .collect();
    MockRule::result(
        "eth_getBlockByNumber",
        json!({"number": format!("0x{n:x}"), "timestamp": format!("0x{:x}", 1_546_300_800 + n * 15), "transactions": txs}),
    )
    .with_params(json!([format!("0x{n:x}"), true]))
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    let node = MockNode::spawn(vec![
        block(100, &[(1, 2, 5_000), (2, 3, 1_000)]),
        block(101, &[]),
        block(102, &[(3, 3, 7), (3, 4, 900)]),
    ])
    .await?;
    let client = NodeClient::new(BackendEndpoint::new(node.url()));
    let dir = tempfile::tempdir()?;
    let checkpoint = dir.path().join("checkpoint.json");

    let mut ndjson = Vec::new();
    let summary = crawl(&client, 100..=102, &checkpoint, &mut ndjson, &CrawlOptions::default()).await?;
    println!("crawled {} block(s), {} transaction line(s)", summary.blocks, summary.lines);
    print!("{}", String::from_utf8_lossy(&ndjson));

    let calls = node.call_count();
    let again = crawl(&client, 100..=102, &checkpoint, &mut Vec::new(), &CrawlOptions::default()).await?;
    println!("re-crawl: {} block(s), {} new node call(s)", again.blocks, node.call_count() - calls);

    let mut store = LedgerStore::new();
    let first = store.import_transactions(&ndjson[..])?;
    let second = store.import_transactions(&ndjson[..])?;
    println!("import: {} inserted, then {} duplicate(s)", first.inserted, second.duplicates);
    for a in [2u8, 3, 4] {
        let addr = format!("0x{}", format!("{a:02x}").repeat(20)).parse()?;
        println!("income of {addr}: {} wei", store.income(&addr));
    }
    Ok(())
}
