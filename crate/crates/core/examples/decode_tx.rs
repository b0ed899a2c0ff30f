//! Decode a signed raw transaction, recover its sender and decode the token call inside it.
//!
//! cargo run --example decode_tx [-- 0xf8...]

use rpclure::wire::{decode_call_data, decode_raw_hex, recover_sender, SelectorRegistry};

const SAMPLE: &str = include_str!("../fixtures/captured_raw_tx.hex");

fn main() -> anyhow::Result<()> {
    let raw = std::env::args().nth(1).unwrap_or_else(|| SAMPLE.trim().to_string());
    let tx = decode_raw_hex(&raw)?;
    println!("nonce     {}", tx.nonce);
    println!("gasPrice  {} wei", tx.gas_price);
    println!("gasLimit  {}", tx.gas_limit);
    println!("to        {}", tx.to.map(|a| a.to_string()).unwrap_or_else(|| "(create)".into()));
    println!("value     {}", tx.value);
    match tx.chain_id()? {
        Some(id) => println!("v         {} (EIP-155, chain id {id})", tx.v),
        None => println!("v         {} (pre-EIP-155)", tx.v),
    }
    println!("from      {}", recover_sender(&tx)?);

    let call = decode_call_data(&tx.data, &SelectorRegistry::with_defaults())?;
    println!("call      {}", call.function);
    if let Some((to, amount)) = call.as_erc20_transfer() {
        println!("  _to     {to}");
        println!("  _value  {amount}");
    }
    Ok(())
}
