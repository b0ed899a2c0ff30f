//! Local store of on-chain Ether transfers, fed from NDJSON and queried by the taint tracer.

pub mod crawl;
pub mod labels;

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use chrono::{DateTime, TimeZone, Utc};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use crawl::{crawl, Checkpoint, CrawlError, CrawlOptions, CrawlSummary};
pub use labels::{AddressLabel, LabelKind, LabelSet};

use crate::types::{parse_quantity, Address, Wei, H256};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerTx {
    pub hash: H256,
    pub from: Address,
    #[serde(default, deserialize_with = "de_opt_address")]
    pub to: Option<Address>,
    pub value: Wei,
    #[serde(deserialize_with = "de_block")]
    pub block: u64,
    #[serde(rename = "ts", deserialize_with = "de_ts", serialize_with = "ser_ts")]
    pub timestamp: DateTime<Utc>,
}

impl LedgerTx {
    /// Ordering key used everywhere transactions are listed.
    pub fn order_key(&self) -> (u64, H256) {
        (self.block, self.hash)
    }

    pub fn is_self_transfer(&self) -> bool {
        self.to == Some(self.from)
    }
}

fn de_opt_address<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Address>, D::Error> {
    match Option::<String>::deserialize(d)? {
        None => Ok(None),
        Some(s) if s.is_empty() => Ok(None),
        Some(s) => s.parse().map(Some).map_err(serde::de::Error::custom),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum NumOrStr {
    Num(u64),
    Str(String),
}

fn de_block<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    match NumOrStr::deserialize(d)? {
        NumOrStr::Num(n) => Ok(n),
        NumOrStr::Str(s) => {
            let n = parse_quantity(&s).map_err(serde::de::Error::custom)?;
            u64::try_from(n).map_err(serde::de::Error::custom)
        }
    }
}

/// Accepts RFC 3339 strings, unix seconds as a number, or unix seconds as a `0x` quantity.
fn de_ts<'de, D: Deserializer<'de>>(d: D) -> Result<DateTime<Utc>, D::Error> {
    let secs = match NumOrStr::deserialize(d)? {
        NumOrStr::Num(n) => n,
        NumOrStr::Str(s) if s.starts_with("0x") => {
            let n = parse_quantity(&s).map_err(serde::de::Error::custom)?;
            u64::try_from(n).map_err(serde::de::Error::custom)?
        }
        NumOrStr::Str(s) => {
            return DateTime::parse_from_rfc3339(&s)
                .map(|t| t.with_timezone(&Utc))
                .map_err(serde::de::Error::custom)
        }
    };
    let secs = i64::try_from(secs).map_err(serde::de::Error::custom)?;
    Utc.timestamp_opt(secs, 0)
        .single()
        .ok_or_else(|| serde::de::Error::custom("timestamp out of range"))
}

fn ser_ts<S: Serializer>(ts: &DateTime<Utc>, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&ts.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct ImportReport {
    pub inserted: usize,
    pub duplicates: usize,
    /// (1-based line number, reason)
    pub malformed: Vec<(usize, String)>,
}

#[derive(Debug, Default, Clone)]
pub struct LedgerStore {
    txs: HashMap<H256, LedgerTx>,
    /// Per sender, hashes kept sorted by (block, hash).
    outgoing: HashMap<Address, Vec<(u64, H256)>>,
    incoming: HashMap<Address, Wei>,
    self_transfers: HashMap<Address, Wei>,
}

impl LedgerStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.txs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.txs.is_empty()
    }

    /// Inserts unless a transaction with the same hash exists. Returns whether it was new.
    pub fn insert(&mut self, tx: LedgerTx) -> bool {
        if self.txs.contains_key(&tx.hash) {
            return false;
        }
        let list = self.outgoing.entry(tx.from).or_default();
        let key = tx.order_key();
        let pos = list.binary_search(&key).unwrap_or_else(|p| p);
        list.insert(pos, key);
        if let Some(to) = tx.to {
            *self.incoming.entry(to).or_insert_with(Wei::zero) += &tx.value;
            if tx.is_self_transfer() {
                *self.self_transfers.entry(to).or_insert_with(Wei::zero) += &tx.value;
            }
        }
        self.txs.insert(tx.hash, tx);
        true
    }

    /// Imports NDJSON lines. Idempotent: hashes already present are skipped. Malformed lines
    /// are reported and never abort the batch.
    pub fn import_transactions<R: BufRead>(&mut self, source: R) -> io::Result<ImportReport> {
        let mut report = ImportReport::default();
        for (idx, line) in source.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<LedgerTx>(&line) {
                Ok(tx) => {
                    if self.insert(tx) {
                        report.inserted += 1;
                    } else {
                        report.duplicates += 1;
                    }
                }
                Err(e) => report.malformed.push((idx + 1, e.to_string())),
            }
        }
        Ok(report)
    }

    pub fn get(&self, hash: &H256) -> Option<&LedgerTx> {
        self.txs.get(hash)
    }

    /// Transfers sent by `address`, ordered by (block, hash).
    pub fn outgoing(&self, address: &Address) -> Vec<&LedgerTx> {
        self.outgoing
            .get(address)
            .map(|keys| keys.iter().map(|(_, h)| &self.txs[h]).collect())
            .unwrap_or_default()
    }

    /// Sum of values of all transfers whose `to` is `address` (self-transfers included).
    pub fn incoming_sum(&self, address: &Address) -> Wei {
        self.incoming.get(address).cloned().unwrap_or_default()
    }

    /// Incoming value excluding self-transfers.
    pub fn income(&self, address: &Address) -> Wei {
        let total = self.incoming_sum(address);
        match self.self_transfers.get(address) {
            Some(own) => Wei(total.0 - &own.0),
            None => total,
        }
    }

    /// Every stored transaction ordered by (block, hash).
    pub fn iter_ordered(&self) -> impl Iterator<Item = &LedgerTx> {
        let ordered: BTreeMap<(u64, H256), &LedgerTx> =
            self.txs.values().map(|t| (t.order_key(), t)).collect();
        ordered.into_values()
    }

    pub fn addresses_with_income(&self) -> impl Iterator<Item = &Address> {
        self.incoming.keys()
    }

    /// Opens a store file (NDJSON); a missing file is an empty store.
    pub fn load(path: &Path) -> io::Result<(Self, ImportReport)> {
        let mut store = Self::new();
        let report = match File::open(path) {
            Ok(f) => store.import_transactions(BufReader::new(f))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => ImportReport::default(),
            Err(e) => return Err(e),
        };
        Ok((store, report))
    }

    /// Writes the whole store as NDJSON sorted by (block, hash), replacing `path` atomically.
    pub fn save(&self, path: &Path) -> io::Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut w = BufWriter::new(File::create(&tmp)?);
            self.write_ndjson(&mut w)?;
            w.flush()?;
        }
        std::fs::rename(tmp, path)
    }

    pub fn write_ndjson<W: Write>(&self, w: &mut W) -> io::Result<()> {
        for tx in self.iter_ordered() {
            serde_json::to_writer(&mut *w, tx)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(hash_byte: u8, from: u8, to: Option<u8>, value: &str, block: u64) -> String {
        let addr = |b: u8| format!("0x{}", hex::encode([b; 20]));
        let to = to.map_or("null".to_string(), |t| format!("\"{}\"", addr(t)));
        format!(
            r#"{{"hash":"0x{}","from":"{}","to":{},"value":"{}","block":{},"ts":"2019-01-01T00:00:00Z"}}"#,
            hex::encode([hash_byte; 32]),
            addr(from),
            to,
            value,
            block
        )
    }

    #[test]
    fn import_is_idempotent() {
        let text = [line(1, 1, Some(2), "5", 1), line(2, 1, Some(3), "0x10", 2), line(3, 2, Some(3), "7", 2)].join("\n");
        let mut store = LedgerStore::new();
        assert_eq!(store.import_transactions(text.as_bytes()).unwrap().inserted, 3);
        let again = store.import_transactions(text.as_bytes()).unwrap();
        assert_eq!(again.inserted, 0);
        assert_eq!(again.duplicates, 3);
        assert_eq!(store.len(), 3);
    }

    #[test]
    fn duplicate_within_file_counted_once() {
        let text = [line(1, 1, Some(2), "5", 1), line(1, 1, Some(2), "5", 1)].join("\n");
        let mut store = LedgerStore::new();
        assert_eq!(store.import_transactions(text.as_bytes()).unwrap().inserted, 1);
    }

    #[test]
    fn missing_to_is_contract_creation() {
        let mut text = line(1, 1, None, "5", 1);
        let mut store = LedgerStore::new();
        assert_eq!(store.import_transactions(text.as_bytes()).unwrap().inserted, 1);
        text = text.replace(",\"to\":null", "");
        let mut store2 = LedgerStore::new();
        store2.import_transactions(text.replace("0x0101", "0x0202").as_bytes()).unwrap();
        assert_eq!(store2.len(), 1);
        assert!(store2.iter_ordered().next().unwrap().to.is_none());
    }

    #[test]
    fn malformed_lines_reported_not_fatal() {
        let text = format!("{}\nnot json\n{{\"hash\":\"0x00\"}}\n{}", line(1, 1, Some(2), "5", 1), line(2, 1, Some(2), "5", 1));
        let mut store = LedgerStore::new();
        let rep = store.import_transactions(text.as_bytes()).unwrap();
        assert_eq!(rep.inserted, 2);
        assert_eq!(rep.malformed.iter().map(|m| m.0).collect::<Vec<_>>(), vec![2, 3]);
    }

    #[test]
    fn incoming_sums() {
        let a = Address([1; 20]);
        let b = Address([2; 20]);
        let text = [line(1, 1, Some(2), "2", 1), line(2, 3, Some(2), "3", 1), line(3, 1, Some(1), "7", 2)].join("\n");
        let mut store = LedgerStore::new();
        store.import_transactions(text.as_bytes()).unwrap();
        assert_eq!(store.incoming_sum(&b), Wei::from(5u64));
        assert_eq!(store.incoming_sum(&a), Wei::from(7u64));
        assert_eq!(store.income(&a), Wei::zero());
        assert_eq!(store.incoming_sum(&Address([9; 20])), Wei::zero());
        assert!(store.outgoing(&Address([9; 20])).is_empty());
    }

    #[test]
    fn outgoing_sorted_by_block_then_hash() {
        let text = [line(9, 1, Some(2), "1", 5), line(3, 1, Some(2), "1", 5), line(7, 1, Some(2), "1", 2)].join("\n");
        let mut store = LedgerStore::new();
        store.import_transactions(text.as_bytes()).unwrap();
        let keys: Vec<(u64, u8)> = store.outgoing(&Address([1; 20])).iter().map(|t| (t.block, t.hash.0[0])).collect();
        assert_eq!(keys, vec![(2, 7), (5, 3), (5, 9)]);
    }

    #[test]
    fn timestamp_forms() {
        let base = line(1, 1, Some(2), "1", 1);
        for ts in ["1546300800", "\"0x5c2aad80\"", "\"2019-01-01T00:00:00+00:00\""] {
            let l = base.replace("\"2019-01-01T00:00:00Z\"", ts);
            let tx: LedgerTx = serde_json::from_str(&l).unwrap();
            assert_eq!(tx.timestamp.timestamp(), 1_546_300_800, "{ts}");
        }
    }

    #[test]
    fn save_load_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.ndjson");
        let text = [line(1, 1, Some(2), "5", 3), line(2, 2, None, "0x10", 1)].join("\n");
        let mut store = LedgerStore::new();
        store.import_transactions(text.as_bytes()).unwrap();
        store.save(&path).unwrap();
        let (back, rep) = LedgerStore::load(&path).unwrap();
        assert_eq!(rep.inserted, 2);
        assert_eq!(back.iter_ordered().cloned().collect::<Vec<_>>(), store.iter_ordered().cloned().collect::<Vec<_>>());
    }
}
