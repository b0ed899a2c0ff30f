//! Local answers for calls the honeypot must never execute.

use rand::RngCore;
use serde_json::{json, Value};

use super::config::HoneypotConfig;
use super::RpcError;
use crate::types::{decode_hex, quantity_hex, Address};

/// 21,000 gas: the fixed cost of a plain Ether transfer.
pub const TRANSFER_GAS_HEX: &str = "0x5208";

fn invalid(msg: impl Into<String>) -> RpcError {
    RpcError::invalid_params(msg)
}

fn first_param<'a>(params: &'a Value, what: &str) -> Result<&'a Value, RpcError> {
    params
        .as_array()
        .and_then(|a| a.first())
        .ok_or_else(|| invalid(format!("missing value for required argument 0 ({what})")))
}

fn tx_object(params: &Value) -> Result<(), RpcError> {
    if first_param(params, "transaction")?.is_object() {
        Ok(())
    } else {
        Err(invalid("invalid argument 0: transaction must be an object"))
    }
}

fn address_arg(params: &Value) -> Result<Address, RpcError> {
    first_param(params, "address")?
        .as_str()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| invalid("invalid argument 0: hex string has length != 40"))
}

fn random_hash(rng: &mut dyn RngCore) -> Value {
    let mut bytes = [0u8; 32];
    rng.fill_bytes(&mut bytes);
    Value::String(format!("0x{}", hex::encode(bytes)))
}

/// Produces the emulated `result` for `method`.
pub fn emulate(
    method: &str,
    params: &Value,
    cfg: &HoneypotConfig,
    rng: &mut dyn RngCore,
) -> Result<Value, RpcError> {
    let decoy = cfg.decoy_account.to_string();
    match method {
        "eth_sendTransaction" | "eth_signTransaction" => {
            tx_object(params)?;
            Ok(random_hash(rng))
        }
        "eth_sendRawTransaction" => {
            let raw = first_param(params, "raw transaction")?
                .as_str()
                .ok_or_else(|| invalid("invalid argument 0: raw transaction must be a hex string"))?;
            decode_hex(raw).map_err(|e| invalid(format!("invalid argument 0: {e}")))?;
            Ok(random_hash(rng))
        }
        "eth_accounts" | "personal_listAccounts" => Ok(json!([decoy])),
        "personal_listWallets" => Ok(json!([{
            "url": "keystore:///root/.ethereum/keystore/decoy",
            "status": "Locked",
            "accounts": [{ "address": decoy, "url": "keystore:///root/.ethereum/keystore/decoy" }]
        }])),
        "eth_coinbase" => Ok(Value::String(decoy)),
        "eth_getBalance" => {
            let who = address_arg(params)?;
            if who == cfg.decoy_account {
                Ok(Value::String(quantity_hex(&cfg.decoy_balance.0)))
            } else {
                Ok(Value::String("0x0".into()))
            }
        }
        "personal_unlockAccount" => {
            address_arg(params)?;
            Ok(Value::Bool(false))
        }
        "eth_estimateGas" => {
            tx_object(params)?;
            Ok(Value::String(TRANSFER_GAS_HEX.into()))
        }
        "miner_setEtherBase" => {
            address_arg(params)?;
            Ok(Value::Bool(true))
        }
        // Looks like a transaction still waiting in the pool.
        "eth_getTransactionReceipt" => Ok(Value::Null),
        _ => Ok(Value::Null),
    }
}
