#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::net::{IpAddr, SocketAddr};
use std::path::PathBuf;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use rand::Rng;
use serde_json::value::RawValue;
use serde_json::{json, Value};

use rpclure::gateway::server::RunningGateway;
use rpclure::gateway::{Gateway, HoneypotConfig, LogRecord, NdjsonLog, PolicyAction};
use rpclure::ledger::{LabelSet, LedgerStore, LedgerTx};
use rpclure::miner::GroupingOptions;
use rpclure::node::mock::{MockNode, MockRule};
use rpclure::node::{BackendEndpoint, NodeClient};
use rpclure::taint::NodeClass;
use rpclure::types::{Address, Wei, H256};

pub const CAPTURED_RAW_TX: &str = include_str!("../../fixtures/captured_raw_tx.hex");
pub const CAPTURED_SEND: &str = include_str!("../../fixtures/captured_send.json");
pub const BASE_MS: i64 = 1_546_300_800_000;

pub fn addr(n: u64) -> Address {
    let mut b = [0u8; 20];
    b[12..].copy_from_slice(&n.to_be_bytes());
    Address(b)
}

pub fn raw(v: &Value) -> Box<RawValue> {
    serde_json::value::to_raw_value(v).unwrap()
}

pub fn rec(ms: i64, ip: &str, method: &str, params: Value, id: Value) -> LogRecord {
    LogRecord {
        timestamp: DateTime::<Utc>::from_timestamp_millis(BASE_MS + ms).unwrap(),
        source_ip: ip.parse::<IpAddr>().unwrap(),
        source_port: 40000,
        method: method.into(),
        params_raw: raw(&params),
        request_id: raw(&id),
        action: PolicyAction::Emulate,
        response_summary: String::new(),
    }
}

pub fn ledger_from(edges: &[(u64, u64, u64)]) -> LedgerStore {
    let mut store = LedgerStore::new();
    for (i, (from, to, value)) in edges.iter().enumerate() {
        let mut hash = [0u8; 32];
        hash[24..].copy_from_slice(&(i as u64 + 1).to_be_bytes());
        store.insert(LedgerTx {
            hash: H256(hash),
            from: addr(*from),
            to: Some(addr(*to)),
            value: Wei::from(*value),
            block: i as u64,
            timestamp: DateTime::<Utc>::from_timestamp(1_546_300_800 + i as i64, 0).unwrap(),
        });
    }
    store
}

pub fn market_labels(markets: &BTreeSet<u64>) -> LabelSet {
    let mut labels = LabelSet::new();
    for m in markets {
        labels.market(addr(*m), &format!("market {m}"));
    }
    labels
}

/// Random small ledger: `n` accounts numbered 1..=n, some markets, some seeds, up to `max_edges`
/// transfers including occasional zero-value and self transfers.
pub struct RandomLedger {
    pub seeds: BTreeSet<u64>,
    pub markets: BTreeSet<u64>,
    pub edges: Vec<(u64, u64, u64)>,
    pub threshold: u32,
}

pub fn random_ledger<R: Rng>(rng: &mut R, max_nodes: u64, max_edges: usize) -> RandomLedger {
    let n = rng.gen_range(2..=max_nodes);
    let mut seeds = BTreeSet::new();
    let mut markets = BTreeSet::new();
    for a in 1..=n {
        match rng.gen_range(0..6) {
            0 => {
                seeds.insert(a);
            }
            1 => {
                markets.insert(a);
            }
            _ => {}
        }
    }
    if seeds.is_empty() {
        seeds.insert(1);
        markets.remove(&1);
    }
    let m = rng.gen_range(0..=max_edges);
    let edges = (0..m)
        .map(|_| {
            let from = rng.gen_range(1..=n);
            let to = if rng.gen_bool(0.05) { from } else { rng.gen_range(1..=n) };
            let value = if rng.gen_bool(0.1) { 0 } else { rng.gen_range(1..1_000_000) };
            (from, to, value)
        })
        .collect();
    RandomLedger {
        seeds,
        markets,
        edges,
        threshold: rng.gen_range(1..=3),
    }
}

#[derive(Debug, PartialEq, Eq)]
pub struct OracleNode {
    pub class: NodeClass,
    pub depth: u32,
    pub seeds: BTreeMap<Address, u32>,
}

/// Classification by enumerating every simple path out of every seed.
pub fn taint_oracle(g: &RandomLedger) -> BTreeMap<Address, OracleNode> {
    let mut adj: BTreeMap<u64, BTreeSet<u64>> = BTreeMap::new();
    for &(f, t, v) in &g.edges {
        if f != t && v > 0 {
            adj.entry(f).or_default().insert(t);
        }
    }
    let k_max = g.threshold as usize;
    let mut depth: BTreeMap<u64, u32> = g.seeds.iter().map(|s| (*s, 0)).collect();
    let mut hits: BTreeMap<u64, BTreeMap<u64, u32>> = BTreeMap::new();

    fn walk(
        g: &RandomLedger,
        adj: &BTreeMap<u64, BTreeSet<u64>>,
        k_max: usize,
        path: &mut Vec<u64>,
        depth: &mut BTreeMap<u64, u32>,
        hits: &mut BTreeMap<u64, BTreeMap<u64, u32>>,
    ) {
        let last = *path.last().unwrap();
        let Some(outs) = adj.get(&last) else { return };
        for &v in outs {
            if path.contains(&v) || g.seeds.contains(&v) {
                continue;
            }
            // intermediates so far: path[1..]
            let intermediates = path.len() - 1;
            let hops = path.len() as u32;
            if g.markets.contains(&v) {
                if intermediates <= k_max {
                    let d = depth.entry(v).or_insert(hops);
                    *d = (*d).min(hops);
                    for (i, p) in path[1..].iter().enumerate() {
                        let pos = hits.entry(*p).or_default().entry(path[0]).or_insert(u32::MAX);
                        *pos = (*pos).min(i as u32 + 1);
                    }
                }
                continue;
            }
            if intermediates + 1 > k_max {
                continue;
            }
            let d = depth.entry(v).or_insert(hops);
            *d = (*d).min(hops);
            path.push(v);
            walk(g, adj, k_max, path, depth, hits);
            path.pop();
        }
    }

    for s in &g.seeds {
        let mut path = vec![*s];
        walk(g, &adj, k_max, &mut path, &mut depth, &mut hits);
    }

    depth
        .into_iter()
        .map(|(a, d)| {
            let (class, seeds) = if g.seeds.contains(&a) {
                (NodeClass::Malicious, BTreeMap::new())
            } else if g.markets.contains(&a) {
                (NodeClass::Market, BTreeMap::new())
            } else if let Some(h) = hits.remove(&a) {
                (NodeClass::Suspicious, h.into_iter().map(|(s, p)| (addr(s), p)).collect())
            } else {
                (NodeClass::Unknown, BTreeMap::new())
            };
            (addr(a), OracleNode { class, depth: d, seeds })
        })
        .collect()
}

/// Evidence record for a grouping instance.
#[derive(Clone, Debug)]
pub struct Evidence {
    pub address: u64,
    pub ip: u8,
    pub id: u32,
}

/// Partition by pairwise relation plus Warshall transitive closure.
pub fn grouping_oracle(
    evidence: &[Evidence],
    tor: &HashSet<u8>,
    id_count: &HashMap<u32, usize>,
    min_id_count: usize,
) -> BTreeSet<BTreeSet<Address>> {
    let addrs: Vec<u64> = evidence.iter().map(|e| e.address).collect::<BTreeSet<_>>().into_iter().collect();
    let pos = |a: u64| addrs.iter().position(|x| *x == a).unwrap();
    let n = addrs.len();
    let mut rel = vec![vec![false; n]; n];
    for i in 0..n {
        rel[i][i] = true;
    }
    let id_ok = |id: u32| id > 1 && id_count.get(&id).copied().unwrap_or(0) >= min_id_count;
    for x in evidence {
        for y in evidence {
            let same_ip = x.ip == y.ip && !tor.contains(&x.ip);
            let same_id = x.id == y.id && id_ok(x.id);
            if same_ip || same_id {
                rel[pos(x.address)][pos(y.address)] = true;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if rel[i][k] && rel[k][j] {
                    rel[i][j] = true;
                }
            }
        }
    }
    (0..n)
        .map(|i| (0..n).filter(|&j| rel[i][j]).map(|j| addr(addrs[j])).collect())
        .collect()
}

pub struct Instance {
    pub records: Vec<LogRecord>,
    pub evidence: Vec<Evidence>,
    pub tor: HashSet<u8>,
    pub id_count: HashMap<u32, usize>,
    pub min_id_count: usize,
}

/// Random evidence and noise records. Ids 0 and 1 are trivial and never merge.
pub fn instance<R: Rng>(rng: &mut R, max_addresses: u64) -> Instance {
    let n = rng.gen_range(1..=max_addresses);
    let ip_pool = rng.gen_range(2..=n as u8 + 2);
    let id_pool = rng.gen_range(1..=6u32);
    let tor: HashSet<u8> = (1..=ip_pool).filter(|_| rng.gen_bool(0.2)).collect();
    let mut records = Vec::new();
    let mut evidence = Vec::new();
    let mut ms = 0;
    for a in 1..=n {
        for _ in 0..rng.gen_range(1..=3) {
            let e = Evidence {
                address: a,
                ip: rng.gen_range(1..=ip_pool),
                id: rng.gen_range(0..=id_pool),
            };
            ms += rng.gen_range(1..1000);
            records.push(rec(
                ms,
                &ip_of(e.ip),
                "eth_sendTransaction",
                json!([{"from": "0xa33023b7c14638f3391d705c938ac506544b25c3", "to": addr(e.address).to_string()}]),
                json!(e.id),
            ));
            evidence.push(e);
        }
    }
    for _ in 0..rng.gen_range(0..20) {
        ms += rng.gen_range(1..1000);
        records.push(rec(
            ms,
            &ip_of(rng.gen_range(1..=ip_pool)),
            "net_version",
            json!([]),
            json!(rng.gen_range(0..=id_pool)),
        ));
    }
    let mut id_count = HashMap::new();
    for r in &records {
        let id: u32 = r.request_id.get().parse().unwrap();
        *id_count.entry(id).or_insert(0) += 1;
    }
    Instance {
        records,
        evidence,
        tor,
        id_count,
        min_id_count: rng.gen_range(1..=8),
    }
}

pub fn options(inst: &Instance) -> GroupingOptions {
    GroupingOptions {
        tor_exits: inst.tor.iter().map(|i| ip_of(*i).parse().unwrap()).collect(),
        min_id_count: inst.min_id_count,
    }
}

pub fn ip_of(n: u8) -> String {
    format!("10.0.0.{n}")
}

/// Live gateway on an ephemeral port, backed by a recording mock node.
pub struct Harness {
    pub node: MockNode,
    pub gateway: RunningGateway,
    pub log_path: PathBuf,
    _dir: tempfile::TempDir,
}

impl Harness {
    pub async fn start(rules: Vec<MockRule>) -> Harness {
        let node = MockNode::spawn(rules).await.unwrap();
        let dir = tempfile::tempdir().unwrap();
        let log_path = dir.path().join("honeypot.ndjson");
        let config = HoneypotConfig {
            backend_url: node.url(),
            log_path: log_path.clone(),
            ..HoneypotConfig::default()
        };
        let client = NodeClient::new(BackendEndpoint::new(node.url()));
        let gw = Arc::new(Gateway::with_seed(config, client, 7));
        let log = Arc::new(NdjsonLog::open(&log_path).unwrap());
        let bind: SocketAddr = "127.0.0.1:0".parse().unwrap();
        let gateway = RunningGateway::spawn(gw, log, bind).await.unwrap();
        Harness {
            node,
            gateway,
            log_path,
            _dir: dir,
        }
    }

    pub fn url(&self) -> String {
        self.gateway.url()
    }

    pub fn records(&self) -> Vec<LogRecord> {
        let f = std::fs::File::open(&self.log_path).unwrap();
        let log = rpclure::gateway::record::read_log(std::io::BufReader::new(f)).unwrap();
        assert!(log.malformed.is_empty(), "{:?}", log.malformed);
        log.records
    }
}

pub fn default_rules() -> Vec<MockRule> {
    let text = include_str!("../../fixtures/mock_node.ndjson");
    rpclure::node::mock::load_rules(text.as_bytes()).unwrap()
}
