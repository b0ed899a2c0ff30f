use std::collections::HashMap;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::Address;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelKind {
    Market,
    TorExit,
    Other,
}

impl FromStr for LabelKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "market" => Ok(LabelKind::Market),
            "torexit" | "tor_exit" | "tor-exit" | "tor" => Ok(LabelKind::TorExit),
            "other" => Ok(LabelKind::Other),
            other => Err(format!("unknown label {other:?}")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AddressLabel {
    pub address: Address,
    pub label: LabelKind,
    pub name: String,
}

#[derive(Debug, Error)]
pub enum LabelError {
    #[error("labels CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("labels CSV row {row}: {reason}")]
    Row { row: usize, reason: String },
}

#[derive(Clone, Debug, Default)]
pub struct LabelSet {
    labels: HashMap<Address, AddressLabel>,
}

impl LabelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a label; an address may carry only one.
    pub fn insert(&mut self, label: AddressLabel) -> Result<(), AddressLabel> {
        if let Some(existing) = self.labels.get(&label.address) {
            return Err(existing.clone());
        }
        self.labels.insert(label.address, label);
        Ok(())
    }

    pub fn market(&mut self, address: Address, name: &str) {
        self.labels.insert(
            address,
            AddressLabel {
                address,
                label: LabelKind::Market,
                name: name.into(),
            },
        );
    }

    pub fn get(&self, address: &Address) -> Option<&AddressLabel> {
        self.labels.get(address)
    }

    pub fn is_market(&self, address: &Address) -> bool {
        self.labels
            .get(address)
            .is_some_and(|l| l.label == LabelKind::Market)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Reads `address,label,name` rows (header required).
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, LabelError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let mut set = LabelSet::new();
        for (idx, row) in rdr.records().enumerate() {
            let row = row?;
            let bad = |reason: String| LabelError::Row { row: idx + 2, reason };
            let address: Address = row
                .get(0)
                .unwrap_or_default()
                .parse()
                .map_err(|e| bad(format!("{e}")))?;
            let label: LabelKind = row.get(1).unwrap_or_default().parse().map_err(bad)?;
            let name = row.get(2).unwrap_or_default().to_string();
            set.insert(AddressLabel { address, label, name })
                .map_err(|_| LabelError::Row {
                    row: idx + 2,
                    reason: format!("{address} labelled twice"),
                })?;
        }
        Ok(set)
    }
}
