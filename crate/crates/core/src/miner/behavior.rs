use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::group::Grouping;
use super::phase::{phase_of, Phase};
use super::{first_param, raw_transaction};
use crate::gateway::LogRecord;
use crate::types::{parse_quantity, Address, Wei, H256};
use crate::wire::tx::gwei;
use crate::wire::{decode_call_data, recover_sender, SelectorRegistry};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BehaviorOptions {
    /// Steal-phase requests per second at which polling is flagged.
    pub polling_rate: f64,
    pub polling_window_ms: i64,
    /// Distinct passwords against one account at which brute forcing is flagged.
    pub bruteforce_min_distinct: usize,
    /// Distinct senders into one destination at which an airdrop fan-in is flagged.
    pub airdrop_min_senders: usize,
    pub baseline_gwei: f64,
}

impl Default for BehaviorOptions {
    fn default() -> Self {
        BehaviorOptions {
            polling_rate: 10.0,
            polling_window_ms: 10_000,
            bruteforce_min_distinct: 5,
            airdrop_min_senders: 100,
            baseline_gwei: 21.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Polling {
    pub detected: bool,
    /// Requests per second in the busiest window.
    pub peak_rate: f64,
}

/// Highest Steal-phase request rate over any sliding window.
pub fn detect_polling(records: &[&LogRecord], opts: &BehaviorOptions) -> Polling {
    let mut ts: Vec<i64> = records
        .iter()
        .filter(|r| phase_of(&r.method) == Phase::Steal)
        .map(|r| r.timestamp.timestamp_millis())
        .collect();
    ts.sort_unstable();
    let window = opts.polling_window_ms.max(1);
    let mut best = 0usize;
    let mut lo = 0;
    for hi in 0..ts.len() {
        while ts[hi] - ts[lo] >= window {
            lo += 1;
        }
        best = best.max(hi - lo + 1);
    }
    let peak_rate = best as f64 * 1000.0 / window as f64;
    Polling {
        detected: peak_rate >= opts.polling_rate,
        peak_rate,
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bruteforce {
    pub detected: bool,
    /// Every password tried, in order, repeats included.
    pub passwords: Vec<String>,
    pub distinct: usize,
}

pub fn detect_bruteforce(records: &[&LogRecord], opts: &BehaviorOptions) -> Bruteforce {
    let mut passwords = Vec::new();
    let mut per_account: HashMap<String, HashSet<String>> = HashMap::new();
    for r in records.iter().filter(|r| r.method == "personal_unlockAccount") {
        let Some(Value::Array(p)) = r.params() else { continue };
        let Some(pw) = p.get(1).and_then(Value::as_str) else { continue };
        let account = p.first().and_then(Value::as_str).unwrap_or_default().to_ascii_lowercase();
        per_account.entry(account).or_default().insert(pw.to_owned());
        passwords.push(pw.to_owned());
    }
    let distinct = passwords.iter().collect::<HashSet<_>>().len();
    let detected = per_account.values().any(|s| s.len() >= opts.bruteforce_min_distinct);
    Bruteforce {
        detected,
        passwords,
        distinct,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ZeroGasTx {
    #[serde(with = "crate::gateway::record::ts_millis")]
    pub timestamp: DateTime<Utc>,
    pub method: String,
    pub to: Option<Address>,
    /// Hash of the signed transaction, when it arrived raw.
    pub hash: Option<H256>,
}

fn quantity_field(obj: &Value, key: &str) -> Option<Wei> {
    obj.get(key).and_then(Value::as_str).and_then(|s| parse_quantity(s).ok()).map(Wei)
}

/// Raw sends whose decoded gas price is zero, plus transaction objects with `gasPrice: 0x0`.
/// Also returns the number of raw payloads that failed to decode.
pub fn detect_zero_gas(records: &[&LogRecord]) -> (Vec<ZeroGasTx>, usize) {
    let mut out = Vec::new();
    let mut failures = 0;
    for r in records {
        if let Some(decoded) = raw_transaction(r) {
            match decoded {
                Ok(tx) if tx.gas_price.is_zero() => out.push(ZeroGasTx {
                    timestamp: r.timestamp,
                    method: r.method.clone(),
                    to: tx.to,
                    hash: Some(H256(tx.hash())),
                }),
                Ok(_) => {}
                Err(_) => failures += 1,
            }
        } else if r.method == "eth_sendTransaction" {
            let Some(obj) = first_param(r) else { continue };
            if quantity_field(&obj, "gasPrice").is_some_and(|p| p.is_zero()) {
                out.push(ZeroGasTx {
                    timestamp: r.timestamp,
                    method: r.method.clone(),
                    to: obj.get("to").and_then(Value::as_str).and_then(|s| s.parse().ok()),
                    hash: None,
                });
            }
        }
    }
    (out, failures)
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AirdropFanin {
    pub detected: bool,
    pub distinct_senders: usize,
    pub destination: Option<Address>,
    pub recovery_failures: usize,
}

/// Finds the destination receiving zero-gas token transfers from the most distinct senders.
pub fn detect_airdrop_fanin(records: &[&LogRecord], registry: &SelectorRegistry, opts: &BehaviorOptions) -> AirdropFanin {
    let mut senders: BTreeMap<Address, HashSet<Address>> = BTreeMap::new();
    let mut recovery_failures = 0;
    for r in records {
        let Some(Ok(tx)) = raw_transaction(r) else { continue };
        if !tx.gas_price.is_zero() {
            continue;
        }
        let Some(dest) = decode_call_data(&tx.data, registry)
            .ok()
            .and_then(|c| c.as_erc20_transfer().map(|(to, _)| to))
        else {
            continue;
        };
        match recover_sender(&tx) {
            Ok(from) => {
                senders.entry(dest).or_default().insert(from);
            }
            Err(_) => recovery_failures += 1,
        }
    }
    // BTreeMap iteration plus strict `>` keeps the smallest address on ties.
    let mut best: Option<(Address, usize)> = None;
    for (dest, set) in &senders {
        if best.is_none_or(|(_, n)| set.len() > n) {
            best = Some((*dest, set.len()));
        }
    }
    let (destination, distinct_senders) = match best {
        Some((d, n)) => (Some(d), n),
        None => (None, 0),
    };
    AirdropFanin {
        detected: distinct_senders >= opts.airdrop_min_senders,
        distinct_senders,
        destination,
        recovery_failures,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DayGas {
    pub date: NaiveDate,
    pub transactions: usize,
    pub mean_gwei: f64,
    pub ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GasPriceStats {
    pub baseline_gwei: f64,
    pub days: Vec<DayGas>,
    pub min_ratio: Option<f64>,
    pub max_ratio: Option<f64>,
}

/// Per-day mean gas price of attacker transactions against a baseline. Zero prices are left out.
pub fn gas_price_stats(records: &[&LogRecord], baseline_gwei: f64) -> GasPriceStats {
    let mut per_day: BTreeMap<NaiveDate, (f64, usize)> = BTreeMap::new();
    for r in records {
        let price = match r.method.as_str() {
            "eth_sendTransaction" | "eth_signTransaction" => {
                first_param(r).and_then(|obj| quantity_field(&obj, "gasPrice"))
            }
            "eth_sendRawTransaction" => raw_transaction(r).and_then(Result::ok).map(|tx| tx.gas_price),
            _ => None,
        };
        let Some(price) = price.filter(|p| !p.is_zero()) else { continue };
        let day = per_day.entry(r.timestamp.date_naive()).or_insert((0.0, 0));
        day.0 += gwei(&price);
        day.1 += 1;
    }
    let days: Vec<DayGas> = per_day
        .into_iter()
        .map(|(date, (sum, n))| {
            let mean_gwei = sum / n as f64;
            DayGas {
                date,
                transactions: n,
                mean_gwei,
                ratio: mean_gwei / baseline_gwei,
            }
        })
        .collect();
    let ratios = days.iter().map(|d| d.ratio);
    GasPriceStats {
        baseline_gwei,
        min_ratio: ratios.clone().reduce(f64::min),
        max_ratio: ratios.reduce(f64::max),
        days,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BehaviorReport {
    pub group_id: u32,
    pub phases: BTreeMap<Phase, usize>,
    pub polling: Polling,
    pub bruteforce: Bruteforce,
    pub zero_gas: Vec<ZeroGasTx>,
    pub airdrop_fanin: AirdropFanin,
    pub gas: GasPriceStats,
    pub decode_failures: usize,
}

/// Runs every detector over each group's records.
pub fn analyze_behaviors(
    grouping: &Grouping,
    records: &[LogRecord],
    registry: &SelectorRegistry,
    opts: &BehaviorOptions,
) -> Vec<BehaviorReport> {
    grouping
        .groups
        .iter()
        .map(|g| {
            let mine = grouping.records_of(g.group_id, records);
            let mut phases = BTreeMap::new();
            for r in &mine {
                *phases.entry(phase_of(&r.method)).or_insert(0) += 1;
            }
            let (zero_gas, decode_failures) = detect_zero_gas(&mine);
            BehaviorReport {
                group_id: g.group_id,
                phases,
                polling: detect_polling(&mine, opts),
                bruteforce: detect_bruteforce(&mine, opts),
                zero_gas,
                airdrop_fanin: detect_airdrop_fanin(&mine, registry, opts),
                gas: gas_price_stats(&mine, opts.baseline_gwei),
                decode_failures,
            }
        })
        .collect()
}

/// Distinct addresses appearing as zero-gas destinations, for quick summaries.
pub fn zero_gas_destinations(txs: &[ZeroGasTx]) -> BTreeSet<Address> {
    txs.iter().filter_map(|t| t.to).collect()
}

#[cfg(test)]
mod tests {
    use super::super::testutil::rec;
    use super::*;
    use serde_json::json;

    fn refs(v: &[LogRecord]) -> Vec<&LogRecord> {
        v.iter().collect()
    }

    #[test]
    fn polling_at_fifty_per_second() {
        let v: Vec<LogRecord> = (0..3000)
            .map(|i| rec(i * 20, "1.1.1.1", "eth_sendTransaction", json!([{}]), json!(739296)))
            .collect();
        let p = detect_polling(&refs(&v), &BehaviorOptions::default());
        assert!(p.detected);
        assert!((p.peak_rate - 50.0).abs() <= 1.0, "{}", p.peak_rate);
    }

    #[test]
    fn slow_or_empty_not_polling() {
        let v: Vec<LogRecord> = (0..30)
            .map(|i| rec(i * 60_000, "1.1.1.1", "eth_sendTransaction", json!([{}]), json!(1)))
            .collect();
        assert!(!detect_polling(&refs(&v), &BehaviorOptions::default()).detected);
        assert_eq!(detect_polling(&[], &BehaviorOptions::default()).peak_rate, 0.0);
    }

    #[test]
    fn probe_traffic_is_not_polling() {
        let v: Vec<LogRecord> = (0..600)
            .map(|i| rec(i * 10, "1.1.1.1", "eth_blockNumber", json!([]), json!(1)))
            .collect();
        assert!(!detect_polling(&refs(&v), &BehaviorOptions::default()).detected);
    }

    #[test]
    fn bruteforce_needs_distinct_passwords() {
        let acct = "0xa33023b7c14638f3391d705c938ac506544b25c3";
        let v: Vec<LogRecord> = ["margarita", "192837465", "a", "b", "c"]
            .iter()
            .enumerate()
            .map(|(i, pw)| rec(i as i64, "1.1.1.1", "personal_unlockAccount", json!([acct, pw, 600]), json!(1)))
            .collect();
        let b = detect_bruteforce(&refs(&v), &BehaviorOptions::default());
        assert!(b.detected);
        assert_eq!(b.passwords[0], "margarita");

        let v: Vec<LogRecord> = (0..20)
            .map(|i| rec(i, "1.1.1.1", "personal_unlockAccount", json!([acct, "ppppGoogle"]), json!(1)))
            .collect();
        let b = detect_bruteforce(&refs(&v), &BehaviorOptions::default());
        assert!(!b.detected);
        assert_eq!(b.distinct, 1);
        assert_eq!(b.passwords.len(), 20);
        assert!(!detect_bruteforce(&[], &BehaviorOptions::default()).detected);
    }

    #[test]
    fn zero_gas_captured_examples() {
        let captured_raw_tx = "0xf8a682125f8082ea60941a95b271b0535d15fa49932daba31ba612b5294680b844a9059cbb0000000000000000000000000fe07dbd07ba4c1075c1db97806ba3c5b113cee0000000000000000000000000000000000000000000000000000000000bebc2001ca095e6417786f699db2dc195f47662c412bb125b8419b9af030ac237d64c5a9250a0357a79a314eecd583f9be2235fd627d85c9af8fe292f9e47d4fa261efc0487bc";
        let v = vec![
            rec(0, "1.1.1.1", "eth_sendRawTransaction", json!([captured_raw_tx]), json!(1)),
            rec(1, "1.1.1.1", "eth_sendTransaction", json!([{"to": "0x63710c26a9be484581dcac1aacdd95ef628923ab", "gasPrice": "0x199c82cc00"}]), json!(1)),
            rec(2, "1.1.1.1", "eth_sendTransaction", json!([{"to": "0x63710c26a9be484581dcac1aacdd95ef628923ab", "gasPrice": "0x0"}]), json!(1)),
        ];
        let (z, fails) = detect_zero_gas(&refs(&v));
        assert_eq!(fails, 0);
        assert_eq!(z.len(), 2);
        assert_eq!(z[0].to.unwrap().to_string(), "0x1a95b271b0535d15fa49932daba31ba612b52946");
        assert!(detect_zero_gas(&[]).0.is_empty());
    }

    #[test]
    fn gas_ratio_captured_send() {
        let v = vec![rec(0, "1.1.1.1", "eth_sendTransaction", json!([{"gasPrice": "0x199c82cc00"}]), json!(1))];
        let s = gas_price_stats(&refs(&v), 21.0);
        assert!((s.max_ratio.unwrap() - 110.0 / 21.0).abs() < 1e-9);
        let v = vec![rec(0, "1.1.1.1", "eth_sendTransaction", json!([{"gasPrice": "0x4e3b29200"}]), json!(1))];
        assert!((gas_price_stats(&refs(&v), 21.0).min_ratio.unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(gas_price_stats(&[], 21.0).min_ratio, None);
    }
}
