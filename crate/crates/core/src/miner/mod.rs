//! Offline analysis of gateway logs: who the attackers send to, how their requests cluster,
//! and what they were doing.

pub mod behavior;
pub mod group;
pub mod phase;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use behavior::{
    analyze_behaviors, detect_airdrop_fanin, detect_bruteforce, detect_polling, detect_zero_gas,
    gas_price_stats, AirdropFanin, BehaviorOptions, BehaviorReport, Bruteforce, DayGas, GasPriceStats,
    Polling, ZeroGasTx,
};
pub use group::{group_attackers, group_index, partition, AttackerGroup, Grouping, GroupingOptions};
pub use phase::{classify_phases, phase_of, Phase, PhaseEntry};

use crate::gateway::LogRecord;
use crate::types::{decode_hex, Address};
use crate::wire::{decode_call_data, decode_legacy_tx, DecodedTransaction, SelectorRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TargetKind {
    DirectTo,
    EtherBase,
    TokenTransferTo,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetExtraction {
    pub address: Address,
    pub kind: TargetKind,
    /// Index of the evidence record in the analysed slice.
    pub record: usize,
    pub method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_contract: Option<Address>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Extraction {
    pub targets: Vec<TargetExtraction>,
    /// Candidate records whose params could not be interpreted.
    pub skipped: usize,
    /// Raw payloads that failed to decode.
    pub decode_failures: usize,
}

impl Extraction {
    pub fn extend(&mut self, other: Extraction) {
        self.targets.extend(other.targets);
        self.skipped += other.skipped;
        self.decode_failures += other.decode_failures;
    }
}

fn first_param(rec: &LogRecord) -> Option<Value> {
    match rec.params()? {
        Value::Array(mut a) if !a.is_empty() => Some(a.swap_remove(0)),
        _ => None,
    }
}

fn as_address(v: &Value) -> Option<Address> {
    v.as_str()?.parse().ok()
}

/// Target addresses read straight from transaction objects and etherbase changes.
pub fn extract_direct_targets(records: &[LogRecord]) -> Extraction {
    let mut out = Extraction::default();
    for (idx, rec) in records.iter().enumerate() {
        let (kind, found) = match rec.method.as_str() {
            "eth_sendTransaction" | "eth_signTransaction" | "eth_estimateGas" => (
                TargetKind::DirectTo,
                first_param(rec).and_then(|p| p.get("to").and_then(as_address)),
            ),
            "miner_setEtherBase" => (TargetKind::EtherBase, first_param(rec).as_ref().and_then(as_address)),
            _ => continue,
        };
        match found {
            Some(address) => out.targets.push(TargetExtraction {
                address,
                kind,
                record: idx,
                method: rec.method.clone(),
                token_contract: None,
            }),
            None => out.skipped += 1,
        }
    }
    out
}

/// Decodes the payload of an `eth_sendRawTransaction` record without recovering the sender.
pub fn raw_transaction(rec: &LogRecord) -> Option<Result<DecodedTransaction, String>> {
    if rec.method != "eth_sendRawTransaction" {
        return None;
    }
    let decoded = first_param(rec)
        .and_then(|p| p.as_str().map(str::to_owned))
        .ok_or_else(|| "param 0 is not a string".to_string())
        .and_then(|s| decode_hex(&s).map_err(|e| e.to_string()))
        .and_then(|bytes| decode_legacy_tx(&bytes).map_err(|e| e.to_string()));
    Some(decoded)
}

/// Target addresses hidden inside signed raw transactions.
pub fn extract_indirect_targets(records: &[LogRecord], registry: &SelectorRegistry) -> Extraction {
    let mut out = Extraction::default();
    for (idx, rec) in records.iter().enumerate() {
        let tx = match raw_transaction(rec) {
            None => continue,
            Some(Err(_)) => {
                out.decode_failures += 1;
                continue;
            }
            Some(Ok(tx)) => tx,
        };
        let Some(to) = tx.to else {
            out.skipped += 1;
            continue;
        };
        let target = if tx.data.is_empty() {
            Some((to, TargetKind::DirectTo, None))
        } else {
            decode_call_data(&tx.data, registry)
                .ok()
                .and_then(|call| call.as_erc20_transfer().map(|(dest, _)| dest))
                .map(|dest| (dest, TargetKind::TokenTransferTo, Some(to)))
        };
        match target {
            Some((address, kind, token_contract)) => out.targets.push(TargetExtraction {
                address,
                kind,
                record: idx,
                method: rec.method.clone(),
                token_contract,
            }),
            None => out.skipped += 1,
        }
    }
    out
}

/// Direct and indirect extraction combined, ordered by evidence record.
pub fn extract_targets(records: &[LogRecord], registry: &SelectorRegistry) -> Extraction {
    let mut all = extract_direct_targets(records);
    all.extend(extract_indirect_targets(records, registry));
    all.targets.sort_by_key(|t| t.record);
    all
}

/// Everything the `group` stage produces for one log.
#[derive(Clone, Debug)]
pub struct Analysis {
    pub extraction: Extraction,
    pub grouping: Grouping,
    pub behaviors: Vec<BehaviorReport>,
}

pub fn analyze(
    records: &[LogRecord],
    registry: &SelectorRegistry,
    grouping: &GroupingOptions,
    behavior: &BehaviorOptions,
) -> Analysis {
    let extraction = extract_targets(records, registry);
    let grouping = partition(&extraction.targets, records, grouping);
    let behaviors = analyze_behaviors(&grouping, records, registry, behavior);
    Analysis {
        extraction,
        grouping,
        behaviors,
    }
}
