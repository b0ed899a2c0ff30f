use std::collections::{BTreeSet, HashMap, HashSet};
use std::net::IpAddr;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::TargetExtraction;
use crate::gateway::LogRecord;
use crate::types::Address;

#[derive(Clone, Debug)]
pub struct GroupingOptions {
    /// IPs never used for the shared-IP merge.
    pub tor_exits: HashSet<IpAddr>,
    /// Minimum number of requests carrying an id before it can merge addresses.
    pub min_id_count: usize,
}

impl Default for GroupingOptions {
    fn default() -> Self {
        GroupingOptions {
            tor_exits: HashSet::new(),
            min_id_count: 100,
        }
    }
}

impl GroupingOptions {
    /// Reads a Tor exit list: one IP per line, `#` comments allowed.
    pub fn load_tor_exits(&mut self, text: &str) -> Result<usize, String> {
        let mut n = 0;
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let ip = line.parse().map_err(|e| format!("line {}: {e}", i + 1))?;
            self.tor_exits.insert(ip);
            n += 1;
        }
        Ok(n)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackerGroup {
    pub group_id: u32,
    pub addresses: BTreeSet<Address>,
    pub ips: BTreeSet<IpAddr>,
    /// Minified JSON text of the constant ids that tied this group together.
    pub request_ids: BTreeSet<String>,
    #[serde(with = "crate::gateway::record::ts_millis")]
    pub first_seen: DateTime<Utc>,
    #[serde(with = "crate::gateway::record::ts_millis")]
    pub last_seen: DateTime<Utc>,
    pub rpc_count: u64,
    pub days_active: u32,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
    }
}

fn trivial_id(text: &str) -> bool {
    matches!(text, "0" | "1" | "null")
}

/// Partitions the extracted addresses into groups and attributes records to them.
///
/// Two addresses merge when their evidence shares a non-Tor source IP, or shares a request id
/// that occurs in at least `min_id_count` records overall and is not 0, 1 or null. Any other
/// record joins the group owning its source IP or frequent id, if there is one.
pub fn group_attackers(
    extractions: &[TargetExtraction],
    records: &[LogRecord],
    opts: &GroupingOptions,
) -> Vec<AttackerGroup> {
    partition(extractions, records, opts).groups
}

/// Groups plus the group each record was attributed to.
#[derive(Clone, Debug, Default)]
pub struct Grouping {
    pub groups: Vec<AttackerGroup>,
    /// Parallel to the input records.
    pub record_group: Vec<Option<u32>>,
}

impl Grouping {
    /// Records attributed to `group_id`, in input order.
    pub fn records_of<'a>(&self, group_id: u32, records: &'a [LogRecord]) -> Vec<&'a LogRecord> {
        records
            .iter()
            .zip(&self.record_group)
            .filter(|(_, g)| **g == Some(group_id))
            .map(|(r, _)| r)
            .collect()
    }
}

/// Like [`group_attackers`], also reporting which group each record belongs to.
pub fn partition(extractions: &[TargetExtraction], records: &[LogRecord], opts: &GroupingOptions) -> Grouping {
    let id_text: Vec<String> = records.iter().map(|r| r.request_id.get().to_owned()).collect();
    let mut id_count: HashMap<&str, usize> = HashMap::new();
    for t in &id_text {
        *id_count.entry(t.as_str()).or_default() += 1;
    }
    let merge_id = |idx: usize| -> Option<&str> {
        let t = id_text[idx].as_str();
        (!trivial_id(t) && id_count[t] >= opts.min_id_count).then_some(t)
    };
    let merge_ip = |idx: usize| -> Option<IpAddr> {
        let ip = records[idx].source_ip;
        (!opts.tor_exits.contains(&ip)).then_some(ip)
    };

    let addresses: Vec<Address> = extractions
        .iter()
        .map(|e| e.address)
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let index: HashMap<Address, usize> = addresses.iter().enumerate().map(|(i, a)| (*a, i)).collect();
    let mut uf = UnionFind::new(addresses.len());
    let mut by_ip: HashMap<IpAddr, usize> = HashMap::new();
    let mut by_id: HashMap<&str, usize> = HashMap::new();
    for e in extractions {
        let a = index[&e.address];
        if let Some(ip) = merge_ip(e.record) {
            let other = *by_ip.entry(ip).or_insert(a);
            uf.union(a, other);
        }
        if let Some(id) = merge_id(e.record) {
            let other = *by_id.entry(id).or_insert(a);
            uf.union(a, other);
        }
    }

    // Record attribution: evidence first, then shared IP, then shared frequent id.
    let mut evidence_of: HashMap<usize, usize> = HashMap::new();
    for e in extractions {
        evidence_of.entry(e.record).or_insert(index[&e.address]);
    }
    struct Acc {
        ips: BTreeSet<IpAddr>,
        ids: BTreeSet<String>,
        first: DateTime<Utc>,
        last: DateTime<Utc>,
        count: u64,
        days: BTreeSet<NaiveDate>,
    }
    let mut acc: HashMap<usize, Acc> = HashMap::new();
    let mut record_root: Vec<Option<usize>> = vec![None; records.len()];
    for (idx, rec) in records.iter().enumerate() {
        let owner = evidence_of
            .get(&idx)
            .copied()
            .or_else(|| merge_ip(idx).and_then(|ip| by_ip.get(&ip).copied()))
            .or_else(|| merge_id(idx).and_then(|id| by_id.get(id).copied()));
        let Some(owner) = owner else { continue };
        let root = uf.find(owner);
        record_root[idx] = Some(root);
        let a = acc.entry(root).or_insert_with(|| Acc {
            ips: BTreeSet::new(),
            ids: BTreeSet::new(),
            first: rec.timestamp,
            last: rec.timestamp,
            count: 0,
            days: BTreeSet::new(),
        });
        a.ips.insert(rec.source_ip);
        if let Some(id) = merge_id(idx) {
            a.ids.insert(id.to_owned());
        }
        a.first = a.first.min(rec.timestamp);
        a.last = a.last.max(rec.timestamp);
        a.count += 1;
        a.days.insert(rec.timestamp.date_naive());
    }

    let mut members: HashMap<usize, BTreeSet<Address>> = HashMap::new();
    for (i, a) in addresses.iter().enumerate() {
        members.entry(uf.find(i)).or_default().insert(*a);
    }
    let mut groups: Vec<(usize, AttackerGroup)> = members
        .into_iter()
        .map(|(root, addresses)| {
            let a = acc.remove(&root).expect("every address has an evidence record");
            (root, AttackerGroup {
                group_id: 0,
                addresses,
                ips: a.ips,
                request_ids: a.ids,
                first_seen: a.first,
                last_seen: a.last,
                rpc_count: a.count,
                days_active: a.days.len() as u32,
            })
        })
        .collect();
    groups.sort_by(|(_, x), (_, y)| {
        (x.first_seen, x.addresses.first()).cmp(&(y.first_seen, y.addresses.first()))
    });
    let mut id_of_root = HashMap::new();
    for (i, (root, g)) in groups.iter_mut().enumerate() {
        g.group_id = i as u32 + 1;
        id_of_root.insert(*root, g.group_id);
    }
    Grouping {
        groups: groups.into_iter().map(|(_, g)| g).collect(),
        record_group: record_root.into_iter().map(|r| r.map(|r| id_of_root[&r])).collect(),
    }
}

/// Index from address to the group that contains it.
pub fn group_index(groups: &[AttackerGroup]) -> HashMap<Address, u32> {
    groups
        .iter()
        .flat_map(|g| g.addresses.iter().map(move |a| (*a, g.group_id)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::testutil::rec;
    use super::super::{TargetExtraction, TargetKind};
    use super::*;
    use serde_json::json;

    fn addr(b: u8) -> Address {
        Address([b; 20])
    }

    fn send(ms: i64, ip: &str, to: u8, id: serde_json::Value) -> LogRecord {
        rec(ms, ip, "eth_sendTransaction", json!([{"to": addr(to).to_string()}]), id)
    }

    fn targets(records: &[LogRecord]) -> Vec<TargetExtraction> {
        super::super::extract_direct_targets(records).targets
    }

    #[test]
    fn shared_ip_merges() {
        let records = vec![send(0, "1.2.3.4", 1, json!(5)), send(1, "1.2.3.4", 2, json!(6))];
        let g = group_attackers(&targets(&records), &records, &GroupingOptions::default());
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].addresses.len(), 2);
        assert_eq!(g[0].rpc_count, 2);
    }

    #[test]
    fn tor_ips_do_not_merge_but_constant_id_does() {
        let mut opts = GroupingOptions::default();
        opts.load_tor_exits("10.0.0.1\n10.0.0.2 # exit\n").unwrap();
        let mut records = Vec::new();
        for i in 0..150 {
            let ip = if i % 2 == 0 { "10.0.0.1" } else { "10.0.0.2" };
            records.push(send(i, ip, 1 + (i % 2) as u8, json!(739296)));
        }
        let g = group_attackers(&targets(&records), &records, &opts);
        assert_eq!(g.len(), 1);
        assert_eq!(g[0].request_ids, BTreeSet::from(["739296".to_string()]));

        // Same traffic with a trivial id stays split.
        for r in &mut records {
            r.request_id = crate::gateway::record::raw_from_value(&json!(1));
        }
        assert_eq!(group_attackers(&targets(&records), &records, &opts).len(), 2);
    }

    #[test]
    fn rare_id_does_not_merge() {
        let records = vec![send(0, "1.1.1.1", 1, json!(42)), send(1, "2.2.2.2", 2, json!(42))];
        let g = group_attackers(&targets(&records), &records, &GroupingOptions::default());
        assert_eq!(g.len(), 2);
    }

    #[test]
    fn ordering_and_ids() {
        let records = vec![
            send(5_000, "2.2.2.2", 9, json!(1)),
            send(1_000, "1.1.1.1", 7, json!(1)),
            send(1_000, "3.3.3.3", 3, json!(1)),
        ];
        let g = group_attackers(&targets(&records), &records, &GroupingOptions::default());
        let firsts: Vec<u8> = g.iter().map(|g| g.addresses.first().unwrap().0[0]).collect();
        assert_eq!(firsts, vec![3, 7, 9]);
        assert_eq!(g.iter().map(|g| g.group_id).collect::<Vec<_>>(), vec![1, 2, 3]);
    }

    #[test]
    fn non_target_records_join_by_ip() {
        let records = vec![
            rec(0, "1.1.1.1", "net_version", json!([]), json!(1)),
            rec(86_400_000, "1.1.1.1", "eth_accounts", json!([]), json!(1)),
            send(86_400_001, "1.1.1.1", 4, json!(1)),
            rec(3, "8.8.8.8", "net_version", json!([]), json!(1)),
        ];
        let ex = targets(&records);
        let g = group_attackers(&ex, &records, &GroupingOptions::default());
        assert_eq!(g[0].rpc_count, 3);
        assert_eq!(g[0].days_active, 2);
        let p = partition(&ex, &records, &GroupingOptions::default());
        assert_eq!(p.records_of(1, &records).len(), 3);
        assert_eq!(p.record_group[3], None);
    }

    #[test]
    fn empty_input() {
        assert!(group_attackers(&[], &[], &GroupingOptions::default()).is_empty());
    }

    #[test]
    fn kinds_do_not_matter_for_grouping() {
        let records = vec![send(0, "1.1.1.1", 1, json!(3))];
        let mut ex = targets(&records);
        ex[0].kind = TargetKind::EtherBase;
        assert_eq!(group_attackers(&ex, &records, &GroupingOptions::default()).len(), 1);
    }
}
