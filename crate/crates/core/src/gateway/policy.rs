use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyAction {
    Forward,
    Emulate,
    Deny,
}

impl fmt::Display for PolicyAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PolicyAction::Forward => "forward",
            PolicyAction::Emulate => "emulate",
            PolicyAction::Deny => "deny",
        })
    }
}

/// Read-only probing calls relayed to the real node.
pub const DEFAULT_FORWARD: &[&str] = &[
    "net_version",
    "rpc_modules",
    "web3_clientVersion",
    "eth_getBlockByNumber",
    "eth_blockNumber",
    "eth_getBlockByHash",
    "eth_gasPrice",
    "eth_getTransactionCount",
    "eth_getBalance",
];

/// Account and value-moving calls answered locally without touching the node.
pub const DEFAULT_EMULATE: &[&str] = &[
    "eth_accounts",
    "eth_coinbase",
    "personal_listAccounts",
    "personal_listWallets",
    "eth_sendTransaction",
    "eth_signTransaction",
    "eth_sendRawTransaction",
    "eth_estimateGas",
    "miner_setEtherBase",
    "personal_unlockAccount",
];

/// Method → action table. Anything absent is denied.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy {
    table: HashMap<String, PolicyAction>,
}

impl Default for Policy {
    fn default() -> Self {
        let table = DEFAULT_FORWARD
            .iter()
            .map(|m| (m.to_string(), PolicyAction::Forward))
            .chain(DEFAULT_EMULATE.iter().map(|m| (m.to_string(), PolicyAction::Emulate)))
            .collect();
        Policy { table }
    }
}

impl Policy {
    pub fn empty() -> Self {
        Policy {
            table: HashMap::new(),
        }
    }

    pub fn set(&mut self, method: impl Into<String>, action: PolicyAction) {
        self.table.insert(method.into(), action);
    }

    /// Entries in `overrides` replace the corresponding entries here.
    pub fn merge(&mut self, overrides: &Policy) {
        for (m, a) in &overrides.table {
            self.table.insert(m.clone(), *a);
        }
    }

    pub fn classify(&self, method: &str) -> PolicyAction {
        self.table.get(method).copied().unwrap_or(PolicyAction::Deny)
    }

    pub fn methods(&self, action: PolicyAction) -> Vec<&str> {
        let mut v: Vec<&str> = self
            .table
            .iter()
            .filter(|(_, a)| **a == action)
            .map(|(m, _)| m.as_str())
            .collect();
        v.sort_unstable();
        v
    }
}

/// Looks `method` up in the policy.
pub fn classify_method(method: &str, policy: &Policy) -> PolicyAction {
    policy.classify(method)
}
