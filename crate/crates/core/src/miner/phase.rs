use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::gateway::LogRecord;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Phase {
    Probe,
    Prepare,
    Steal,
}

/// Total: methods outside the prepare and steal lists count as probing.
pub fn phase_of(method: &str) -> Phase {
    match method {
        "eth_accounts" | "eth_coinbase" | "personal_listAccounts" | "personal_listWallets" | "eth_gasPrice"
        | "eth_getBalance" | "eth_getTransactionCount" => Phase::Prepare,
        "eth_sendTransaction" | "eth_signTransaction" | "eth_sendRawTransaction" | "personal_unlockAccount"
        | "miner_setEtherBase" | "eth_estimateGas" => Phase::Steal,
        _ => Phase::Probe,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhaseEntry {
    pub phase: Phase,
    pub method: String,
    #[serde(with = "crate::gateway::record::ts_millis")]
    pub timestamp: DateTime<Utc>,
}

/// Timeline of one group's records, ordered by timestamp (stable for equal instants).
pub fn classify_phases<'a>(records: impl IntoIterator<Item = &'a LogRecord>) -> Vec<PhaseEntry> {
    let mut out: Vec<PhaseEntry> = records
        .into_iter()
        .map(|r| PhaseEntry {
            phase: phase_of(&r.method),
            method: r.method.clone(),
            timestamp: r.timestamp,
        })
        .collect();
    out.sort_by_key(|e| e.timestamp);
    out
}
