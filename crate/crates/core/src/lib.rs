//! Ethereum JSON-RPC honeypot gateway and the offline forensics pipeline that analyses
//! what it captures.

pub mod cli;
pub mod gateway;
pub mod ledger;
pub mod miner;
pub mod taint;
pub mod node;
pub mod sim;
pub mod types;
pub mod wire;
