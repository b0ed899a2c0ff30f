//! Follows stolen Ether from the captured attacker accounts towards exchange deposit addresses.

pub mod dot;
pub mod report;

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use serde::{Deserialize, Serialize};

pub use dot::export_dot;
pub use report::{estimate_profit, ProfitReport, ProfitRow, ReportError};

use crate::ledger::{LabelSet, LedgerStore};
use crate::types::{Address, Wei};

pub const DEFAULT_THRESHOLD: u32 = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeClass {
    Malicious,
    Suspicious,
    Unknown,
    Market,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintNode {
    pub class: NodeClass,
    /// Hops from the closest seed along traversable edges; 0 for seeds.
    pub depth: u32,
    /// For suspicious nodes: each seed with a qualifying path through this node, mapped to the
    /// node's smallest position (1 = first hop) on such a path.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub seeds: BTreeMap<Address, u32>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintEdge {
    pub from: Address,
    pub to: Address,
    pub total: Wei,
    pub tx_count: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaintGraph {
    pub threshold: u32,
    pub nodes: BTreeMap<Address, TaintNode>,
    /// Sorted by (from, to).
    pub edges: Vec<TaintEdge>,
}

impl TaintGraph {
    pub fn class_of(&self, a: &Address) -> Option<NodeClass> {
        self.nodes.get(a).map(|n| n.class)
    }

    pub fn with_class(&self, class: NodeClass) -> impl Iterator<Item = &Address> {
        self.nodes.iter().filter(move |(_, n)| n.class == class).map(|(a, _)| a)
    }

    /// Seed each suspicious node is credited to: the nearest one, ties broken by lower group id
    /// and then lower address. Seeds missing from `group_of` lose ties.
    pub fn attribution(&self, group_of: &HashMap<Address, u32>) -> BTreeMap<Address, Address> {
        self.nodes
            .iter()
            .filter(|(_, n)| n.class == NodeClass::Suspicious)
            .filter_map(|(a, n)| {
                n.seeds
                    .iter()
                    .min_by_key(|(s, pos)| (**pos, group_of.get(*s).copied().unwrap_or(u32::MAX), **s))
                    .map(|(s, _)| (*a, *s))
            })
            .collect()
    }
}

/// Aggregated transfer edges usable for taint: positive value, not to self, recipient present.
type Adjacency = BTreeMap<Address, BTreeMap<Address, (Wei, u64)>>;

fn adjacency_from(ledger: &LedgerStore, from: &Address, out: &mut Adjacency) {
    if out.contains_key(from) {
        return;
    }
    let mut edges: BTreeMap<Address, (Wei, u64)> = BTreeMap::new();
    for tx in ledger.outgoing(from) {
        let Some(to) = tx.to else { continue };
        if to == *from || tx.value.is_zero() {
            continue;
        }
        let e = edges.entry(to).or_insert_with(|| (Wei::zero(), 0));
        e.0 += &tx.value;
        e.1 += 1;
    }
    out.insert(*from, edges);
}

/// Classifies the accounts around `seeds`.
///
/// A node is Suspicious when it lies on a simple path seed → v1 … vk → market where every vi is
/// neither a seed nor a market and k ≤ `threshold`. Nodes reachable within `threshold` such hops
/// that lie on no such path are Unknown. Markets and seeds are never expanded through.
pub fn trace(seeds: &BTreeSet<Address>, labels: &LabelSet, ledger: &LedgerStore, threshold: u32) -> TaintGraph {
    let is_sink = |a: &Address| labels.is_market(a);
    let blocked = |a: &Address| seeds.contains(a) || is_sink(a);

    // Forward BFS: reachability and depth. Every intermediate discovered here is within bound.
    let mut adj: Adjacency = BTreeMap::new();
    let mut depth: BTreeMap<Address, u32> = seeds.iter().map(|s| (*s, 0)).collect();
    let mut queue: VecDeque<Address> = seeds.iter().copied().collect();
    while let Some(u) = queue.pop_front() {
        let d = depth[&u];
        if d > 0 && blocked(&u) {
            continue;
        }
        if d > threshold {
            continue;
        }
        adjacency_from(ledger, &u, &mut adj);
        for v in adj[&u].keys() {
            if depth.contains_key(v) {
                continue;
            }
            // Intermediates may sit at depth ≤ threshold; markets one further.
            if d + 1 > threshold && !is_sink(v) {
                continue;
            }
            depth.insert(*v, d + 1);
            queue.push_back(*v);
        }
    }

    // Hops from each explored intermediate to the nearest market through intermediates only.
    let mut to_market: HashMap<Address, u32> = HashMap::new();
    let mut reverse: HashMap<Address, Vec<Address>> = HashMap::new();
    for (u, outs) in &adj {
        for v in outs.keys() {
            reverse.entry(*v).or_default().push(*u);
        }
    }
    let mut q: VecDeque<Address> = VecDeque::new();
    for a in depth.keys().filter(|a| is_sink(a)) {
        to_market.insert(*a, 0);
        q.push_back(*a);
    }
    while let Some(v) = q.pop_front() {
        let d = to_market[&v];
        for u in reverse.get(&v).into_iter().flatten() {
            if blocked(u) || to_market.contains_key(u) {
                continue;
            }
            to_market.insert(*u, d + 1);
            q.push_back(*u);
        }
    }

    // Bounded DFS over simple paths, pruned by the market distance lower bound.
    let mut on_path: BTreeMap<Address, BTreeMap<Address, u32>> = BTreeMap::new();
    for seed in seeds {
        let mut path: Vec<Address> = Vec::new();
        dfs(seed, seed, &adj, &to_market, threshold, &blocked, &is_sink, &mut path, &mut on_path);
    }

    let mut nodes = BTreeMap::new();
    for (a, d) in &depth {
        let (class, hits) = if seeds.contains(a) {
            (NodeClass::Malicious, None)
        } else if is_sink(a) {
            (NodeClass::Market, None)
        } else if let Some(hits) = on_path.remove(a) {
            (NodeClass::Suspicious, Some(hits))
        } else {
            (NodeClass::Unknown, None)
        };
        nodes.insert(
            *a,
            TaintNode {
                class,
                depth: *d,
                seeds: hits.unwrap_or_default(),
            },
        );
    }

    let mut edges = Vec::new();
    for (from, outs) in &adj {
        if !nodes.contains_key(from) || nodes[from].class == NodeClass::Market {
            continue;
        }
        for (to, (total, n)) in outs {
            if nodes.contains_key(to) {
                edges.push(TaintEdge {
                    from: *from,
                    to: *to,
                    total: total.clone(),
                    tx_count: *n,
                });
            }
        }
    }
    TaintGraph {
        threshold,
        nodes,
        edges,
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(
    seed: &Address,
    at: &Address,
    adj: &Adjacency,
    to_market: &HashMap<Address, u32>,
    threshold: u32,
    blocked: &dyn Fn(&Address) -> bool,
    is_sink: &dyn Fn(&Address) -> bool,
    path: &mut Vec<Address>,
    hits: &mut BTreeMap<Address, BTreeMap<Address, u32>>,
) {
    let Some(outs) = adj.get(at) else { return };
    for v in outs.keys() {
        if is_sink(v) {
            for (i, p) in path.iter().enumerate() {
                let pos = hits.entry(*p).or_default().entry(*seed).or_insert(u32::MAX);
                *pos = (*pos).min(i as u32 + 1);
            }
            continue;
        }
        if blocked(v) || path.contains(v) {
            continue;
        }
        // v becomes intermediate number path.len()+1 and needs to_market[v]-1 more after it.
        let Some(rest) = to_market.get(v) else { continue };
        if path.len() as u32 + rest > threshold {
            continue;
        }
        path.push(*v);
        dfs(seed, v, adj, to_market, threshold, blocked, is_sink, path, hits);
        path.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ledger::LedgerTx;
    use crate::types::H256;
    use chrono::Utc;

    fn a(b: u8) -> Address {
        Address([b; 20])
    }

    fn ledger(edges: &[(u8, u8, u64)]) -> LedgerStore {
        let mut store = LedgerStore::new();
        for (i, (f, t, v)) in edges.iter().enumerate() {
            let mut h = [0u8; 32];
            h[..8].copy_from_slice(&(i as u64).to_be_bytes());
            store.insert(LedgerTx {
                hash: H256(h),
                from: a(*f),
                to: Some(a(*t)),
                value: Wei::from(*v),
                block: i as u64,
                timestamp: Utc::now(),
            });
        }
        store
    }

    fn markets(ids: &[u8]) -> LabelSet {
        let mut l = LabelSet::new();
        for m in ids {
            l.market(a(*m), "exchange");
        }
        l
    }

    #[test]
    fn minimal_qualifying_path() {
        let g = trace(&BTreeSet::from([a(1)]), &markets(&[9]), &ledger(&[(1, 2, 5), (2, 9, 5)]), 3);
        assert_eq!(g.class_of(&a(2)), Some(NodeClass::Suspicious));
        assert_eq!(g.nodes[&a(2)].depth, 1);
        assert_eq!(g.class_of(&a(9)), Some(NodeClass::Market));
        assert_eq!(g.class_of(&a(1)), Some(NodeClass::Malicious));
    }

    #[test]
    fn path_too_long_is_unknown() {
        let l = ledger(&[(1, 2, 1), (2, 3, 1), (3, 4, 1), (4, 5, 1), (5, 9, 1)]);
        let g = trace(&BTreeSet::from([a(1)]), &markets(&[9]), &l, 3);
        for n in [2, 3, 4] {
            assert_eq!(g.class_of(&a(n)), Some(NodeClass::Unknown), "{n}");
        }
        assert_eq!(g.class_of(&a(5)), None);
        assert_eq!(g.class_of(&a(9)), None);
        let g4 = trace(&BTreeSet::from([a(1)]), &markets(&[9]), &l, 4);
        assert_eq!(g4.class_of(&a(5)), Some(NodeClass::Suspicious));
    }

    #[test]
    fn zero_value_and_self_transfers_ignored() {
        let l = ledger(&[(1, 2, 0), (2, 9, 1), (1, 1, 4), (1, 3, 1), (3, 3, 1)]);
        let g = trace(&BTreeSet::from([a(1)]), &markets(&[9]), &l, 3);
        assert_eq!(g.class_of(&a(2)), None);
        assert_eq!(g.class_of(&a(3)), Some(NodeClass::Unknown));
        assert_eq!(g.edges.len(), 1);
    }

    #[test]
    fn markets_absorb() {
        let l = ledger(&[(1, 9, 1), (9, 2, 1), (2, 8, 1)]);
        let g = trace(&BTreeSet::from([a(1)]), &markets(&[8, 9]), &l, 3);
        assert_eq!(g.class_of(&a(2)), None);
        assert_eq!(g.class_of(&a(8)), None);
    }

    #[test]
    fn absent_seed_still_emitted() {
        let g = trace(&BTreeSet::from([a(7)]), &markets(&[9]), &ledger(&[(1, 9, 1)]), 3);
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.class_of(&a(7)), Some(NodeClass::Malicious));
        assert!(g.edges.is_empty());
        assert_eq!(export_dot(&TaintGraph::default()), "digraph taint {\n  rankdir=LR;\n}\n");
    }

    #[test]
    fn attribution_prefers_nearest_then_lower_group() {
        // 1 → 3 → 9 and 2 → 3 → 9 tie on distance; 4 → 5 → 3 is farther.
        let l = ledger(&[(1, 3, 1), (2, 3, 1), (4, 5, 1), (5, 3, 1), (3, 9, 1)]);
        let g = trace(&BTreeSet::from([a(1), a(2), a(4)]), &markets(&[9]), &l, 3);
        let groups = HashMap::from([(a(1), 7), (a(2), 2), (a(4), 1)]);
        let attr = g.attribution(&groups);
        assert_eq!(attr[&a(3)], a(2));
        assert_eq!(attr[&a(5)], a(4));
    }

    #[test]
    fn profit_adds_suspicious_income() {
        let l = ledger(&[(8, 1, 2_000), (1, 3, 500), (3, 9, 500), (1, 1, 50)]);
        let g = trace(&BTreeSet::from([a(1), a(6)]), &markets(&[9]), &l, 3);
        let r = estimate_profit(&g, &l, bigdecimal::BigDecimal::from(139), &HashMap::from([(a(1), 4)]));
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.rows[0].group_id, 4);
        assert_eq!(r.rows[0].ether_malicious, Wei::from(2_000u64));
        assert_eq!(r.rows[0].ether_plus, Wei::from(2_500u64));
    }
}
