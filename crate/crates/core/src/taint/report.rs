use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::str::FromStr;

use bigdecimal::{BigDecimal, RoundingMode};
use num_bigint::{BigInt, BigUint, Sign};
use serde::Serialize;
use thiserror::Error;

use super::{NodeClass, TaintGraph};
use crate::ledger::LedgerStore;
use crate::types::{Address, Wei};

pub const REPORT_HEADER: [&str; 6] = ["group", "address", "ether_malicious", "usd_malicious", "ether_plus", "usd_plus"];

/// Default USD price of one Ether.
pub const DEFAULT_PRICE: &str = "139";

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ProfitRow {
    /// 0 when the seed belongs to no known group.
    pub group_id: u32,
    pub address: Address,
    pub ether_malicious: Wei,
    /// Malicious income plus that of the suspicious accounts credited to this address.
    pub ether_plus: Wei,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ProfitReport {
    /// Sorted by (group_id, address).
    pub rows: Vec<ProfitRow>,
    pub price_usd_per_ether: BigDecimal,
}

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("report row {row}: {reason}")]
    Row { row: usize, reason: String },
    #[error("I/O: {0}")]
    Io(#[from] std::io::Error),
}

fn wei_to_ether(w: &Wei) -> BigDecimal {
    BigDecimal::new(BigInt::from_biguint(Sign::Plus, w.0.clone()), 18)
}

/// Parses a decimal Ether amount into exact Wei. More than 18 fractional digits is an error.
pub fn ether_to_wei(text: &str) -> Result<Wei, String> {
    let d = BigDecimal::from_str(text.trim()).map_err(|e| format!("{text:?}: {e}"))?;
    let (int, scale) = d.normalized().into_bigint_and_exponent();
    if scale > 18 {
        return Err(format!("{text:?}: finer than one Wei"));
    }
    let scaled = int * BigInt::from(10u8).pow((18 - scale) as u32);
    match scaled.to_biguint() {
        Some(n) => Ok(Wei(n)),
        None => Err(format!("{text:?}: negative amount")),
    }
}

/// Rounds half-up to two decimals and prints without exponent.
pub fn money(d: &BigDecimal) -> String {
    d.with_scale_round(2, RoundingMode::HalfUp).to_plain_string()
}

impl ProfitReport {
    pub fn total_malicious(&self) -> Wei {
        self.rows.iter().map(|r| r.ether_malicious.clone()).sum()
    }

    pub fn total_plus(&self) -> Wei {
        self.rows.iter().map(|r| r.ether_plus.clone()).sum()
    }

    pub fn usd(&self, w: &Wei) -> BigDecimal {
        wei_to_ether(w) * &self.price_usd_per_ether
    }

    /// Writes `report.csv`: one line per row, then a `total` line. All amounts use two decimals.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<(), ReportError> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_HEADER)?;
        let line = |group: String, address: String, m: &Wei, p: &Wei| {
            [
                group,
                address,
                money(&wei_to_ether(m)),
                money(&self.usd(m)),
                money(&wei_to_ether(p)),
                money(&self.usd(p)),
            ]
        };
        for r in &self.rows {
            w.write_record(line(r.group_id.to_string(), r.address.to_string(), &r.ether_malicious, &r.ether_plus))?;
        }
        w.write_record(line("total".into(), String::new(), &self.total_malicious(), &self.total_plus()))?;
        w.flush()?;
        Ok(())
    }

    /// Loads rows from a CSV with the report header. USD columns are ignored and a `total` line,
    /// if present, is skipped; amounts are taken as exact Ether decimals.
    pub fn from_csv<R: Read>(input: R, price_usd_per_ether: BigDecimal) -> Result<Self, ReportError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(input);
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let bad = |reason: String| ReportError::Row { row: i + 2, reason };
            let field = |k: usize| rec.get(k).ok_or_else(|| bad(format!("missing column {}", REPORT_HEADER[k])));
            if field(0)? == "total" {
                continue;
            }
            rows.push(ProfitRow {
                group_id: field(0)?.parse().map_err(|e| bad(format!("group: {e}")))?,
                address: field(1)?.parse().map_err(|e| bad(format!("address: {e}")))?,
                ether_malicious: ether_to_wei(field(2)?).map_err(bad)?,
                ether_plus: ether_to_wei(field(4)?).map_err(bad)?,
            });
        }
        rows.sort_by_key(|r| (r.group_id, r.address));
        Ok(ProfitReport {
            rows,
            price_usd_per_ether,
        })
    }
}

/// Builds the per-address profit table from a traced graph.
///
/// A malicious address earns its incoming Ether minus self-transfers. Each suspicious account's
/// income is added to the one seed it is attributed to (see [`TaintGraph::attribution`]).
/// Transfers between two malicious addresses count for the recipient as well: rows are not
/// deduplicated against each other. Rows where both amounts are zero are dropped.
pub fn estimate_profit(
    graph: &TaintGraph,
    ledger: &LedgerStore,
    price_usd_per_ether: BigDecimal,
    group_of: &HashMap<Address, u32>,
) -> ProfitReport {
    let mut plus: BTreeMap<Address, Wei> = BTreeMap::new();
    for (suspicious, seed) in graph.attribution(group_of) {
        *plus.entry(seed).or_insert_with(Wei::zero) += &ledger.income(&suspicious);
    }
    let mut rows: Vec<ProfitRow> = graph
        .with_class(NodeClass::Malicious)
        .map(|seed| {
            let m = ledger.income(seed);
            let p = Wei(&m.0 + plus.get(seed).map_or_else(BigUint::default, |w| w.0.clone()));
            ProfitRow {
                group_id: group_of.get(seed).copied().unwrap_or(0),
                address: *seed,
                ether_malicious: m,
                ether_plus: p,
            }
        })
        .filter(|r| !(r.ether_malicious.is_zero() && r.ether_plus.is_zero()))
        .collect();
    rows.sort_by_key(|r| (r.group_id, r.address));
    ProfitReport {
        rows,
        price_usd_per_ether,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ether_parsing_is_exact() {
        assert_eq!(ether_to_wei("1").unwrap(), Wei::from_ether(1));
        assert_eq!(ether_to_wei("0.000000000000000001").unwrap(), Wei::from(1u64));
        assert_eq!(ether_to_wei("4193.58").unwrap().0, BigUint::from(419358u64) * BigUint::from(10u64).pow(16));
        assert!(ether_to_wei("0.0000000000000000001").is_err());
        assert!(ether_to_wei("-1").is_err());
    }

    #[test]
    fn money_rounds_half_up() {
        assert_eq!(money(&BigDecimal::from_str("0.005").unwrap()), "0.01");
        assert_eq!(money(&BigDecimal::from_str("0.004999").unwrap()), "0.00");
        assert_eq!(money(&BigDecimal::from_str("278").unwrap()), "278.00");
        assert_eq!(money(&BigDecimal::from_str("1e3").unwrap()), "1000.00");
    }

    #[test]
    fn csv_roundtrip_and_usd() {
        let text = "group,address,ether_malicious,usd_malicious,ether_plus,usd_plus\n\
                    1,0x0000000000000000000000000000000000000001,2,0,2.5,0\n";
        let report = ProfitReport::from_csv(text.as_bytes(), BigDecimal::from(139)).unwrap();
        let mut out = Vec::new();
        report.write_csv(&mut out).unwrap();
        let out = String::from_utf8(out).unwrap();
        assert!(out.contains("1,0x0000000000000000000000000000000000000001,2.00,278.00,2.50,347.50\n"), "{out}");
        assert!(out.ends_with("total,,2.00,278.00,2.50,347.50\n"));
    }
}
