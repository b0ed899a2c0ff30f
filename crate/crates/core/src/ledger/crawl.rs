//! Pulls external transactions block by block from a node, with a resumable checkpoint.

use std::io::{self, Write};
use std::ops::RangeInclusive;
use std::path::Path;
use std::time::Duration;

use chrono::{TimeZone, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::LedgerTx;
use crate::node::{NodeClient, Reply, TransportError};
use crate::types::{parse_quantity, Wei};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub last_block: Option<u64>,
}

impl Checkpoint {
    /// A missing file means nothing has been crawled yet.
    pub fn load(path: &Path) -> io::Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => serde_json::from_slice(&bytes).map_err(io::Error::other),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Checkpoint::default()),
            Err(e) => Err(e),
        }
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_vec(self)?)?;
        std::fs::rename(tmp, path)
    }
}

#[derive(Clone, Debug)]
pub struct CrawlOptions {
    /// Attempts per block before giving up.
    pub attempts: u32,
    /// Delay before the first retry; doubled on each further retry.
    pub base_delay: Duration,
}

impl Default for CrawlOptions {
    fn default() -> Self {
        CrawlOptions {
            attempts: 5,
            base_delay: Duration::from_millis(250),
        }
    }
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CrawlSummary {
    pub blocks: u64,
    pub lines: u64,
    pub first_block: Option<u64>,
}

#[derive(Debug, Error)]
pub enum CrawlError {
    #[error("I/O: {0}")]
    Io(#[from] io::Error),
    #[error("block {block}: {source}")]
    Transport { block: u64, source: TransportError },
    #[error("block {block}: node error {error}")]
    Node { block: u64, error: Value },
    #[error("block {0} not available on the node")]
    MissingBlock(u64),
    #[error("block {block}: {reason}")]
    Malformed { block: u64, reason: String },
}

fn field_u64(obj: &Value, key: &str, block: u64) -> Result<u64, CrawlError> {
    let malformed = |reason: String| CrawlError::Malformed { block, reason };
    let s = obj
        .get(key)
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(format!("missing {key}")))?;
    let n = parse_quantity(s).map_err(|e| malformed(format!("{key}: {e}")))?;
    u64::try_from(n).map_err(|_| malformed(format!("{key} too large")))
}

/// Converts an `eth_getBlockByNumber(.., true)` result into ledger rows.
pub fn block_transactions(block_json: &Value, block: u64) -> Result<Vec<LedgerTx>, CrawlError> {
    let malformed = |reason: String| CrawlError::Malformed { block, reason };
    let ts = field_u64(block_json, "timestamp", block)?;
    let timestamp = Utc
        .timestamp_opt(ts as i64, 0)
        .single()
        .ok_or_else(|| malformed("timestamp out of range".into()))?;
    let txs = block_json
        .get("transactions")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing transactions array".into()))?;
    txs.iter()
        .map(|t| {
            let str_field = |k: &str| t.get(k).and_then(Value::as_str).ok_or_else(|| malformed(format!("tx missing {k}")));
            let to = match t.get("to") {
                None | Some(Value::Null) => None,
                Some(v) => Some(
                    v.as_str()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| malformed("bad tx.to".into()))?,
                ),
            };
            Ok(LedgerTx {
                hash: str_field("hash")?.parse().map_err(|e| malformed(format!("tx hash: {e}")))?,
                from: str_field("from")?.parse().map_err(|e| malformed(format!("tx from: {e}")))?,
                to,
                value: Wei(parse_quantity(str_field("value")?).map_err(|e| malformed(format!("tx value: {e}")))?),
                block,
                timestamp,
            })
        })
        .collect()
}

async fn fetch_block(client: &NodeClient, block: u64, opts: &CrawlOptions) -> Result<Value, CrawlError> {
    let params = json!([format!("0x{block:x}"), true]);
    let mut delay = opts.base_delay;
    let mut attempt = 1;
    loop {
        match client.call_value("eth_getBlockByNumber", &params).await {
            Ok(Reply::Result(Value::Null)) => return Err(CrawlError::MissingBlock(block)),
            Ok(Reply::Result(v)) => return Ok(v),
            Ok(Reply::Error(error)) => return Err(CrawlError::Node { block, error }),
            Err(source) if attempt >= opts.attempts.max(1) => return Err(CrawlError::Transport { block, source }),
            Err(e) => {
                tracing::warn!(block, attempt, error = %e, "block fetch failed, backing off");
                tokio::time::sleep(delay).await;
                delay *= 2;
                attempt += 1;
            }
        }
    }
}

/// Crawls `range`, appending one NDJSON line per transaction to `out`. The checkpoint is
/// advanced only after a block's lines are flushed, so a failure can always be resumed.
pub async fn crawl<W: Write>(
    client: &NodeClient,
    range: RangeInclusive<u64>,
    checkpoint_path: &Path,
    out: &mut W,
    opts: &CrawlOptions,
) -> Result<CrawlSummary, CrawlError> {
    let mut checkpoint = Checkpoint::load(checkpoint_path)?;
    let start = match checkpoint.last_block {
        Some(last) => (*range.start()).max(last.saturating_add(1)),
        None => *range.start(),
    };
    let mut summary = CrawlSummary::default();
    if start > *range.end() {
        return Ok(summary);
    }
    summary.first_block = Some(start);
    for block in start..=*range.end() {
        let json = fetch_block(client, block, opts).await?;
        for tx in block_transactions(&json, block)? {
            serde_json::to_writer(&mut *out, &tx).map_err(io::Error::from)?;
            out.write_all(b"\n")?;
            summary.lines += 1;
        }
        out.flush()?;
        checkpoint.last_block = Some(block);
        checkpoint.save(checkpoint_path)?;
        summary.blocks += 1;
    }
    Ok(summary)
}
