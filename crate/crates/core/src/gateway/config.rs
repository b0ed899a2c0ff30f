use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use super::policy::Policy;
use crate::types::{Address, Wei};

pub const DEFAULT_DECOY: &str = "0xa33023b7c14638f3391d705c938ac506544b25c3";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("parsing TOML config: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("parsing JSON config: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid value for {key}: {reason}")]
    Invalid { key: String, reason: String },
}

#[derive(Clone, Debug)]
pub struct HoneypotConfig {
    pub listen_port: u16,
    pub decoy_account: Address,
    pub decoy_balance: Wei,
    pub policy: Policy,
    pub backend_url: String,
    pub log_path: PathBuf,
}

impl Default for HoneypotConfig {
    fn default() -> Self {
        HoneypotConfig {
            listen_port: 8545,
            decoy_account: DEFAULT_DECOY.parse().expect("valid default decoy"),
            // 5 Ether
            decoy_balance: Wei::from_ether(5),
            policy: Policy::default(),
            backend_url: "http://127.0.0.1:18545".into(),
            log_path: PathBuf::from("honeypot.ndjson"),
        }
    }
}

/// On-disk form; every key optional, `policy` entries merge over the default table.
#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    listen_port: Option<u16>,
    decoy_account: Option<Address>,
    decoy_balance: Option<Wei>,
    policy: Option<Policy>,
    backend_url: Option<String>,
    log_path: Option<PathBuf>,
}

impl HoneypotConfig {
    /// Loads a TOML file (or JSON when the extension is `.json`).
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let file: ConfigFile = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text)?
        } else {
            toml::from_str(&text)?
        };
        let mut cfg = HoneypotConfig::default();
        cfg.apply(file);
        Ok(cfg)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = HoneypotConfig::default();
        cfg.apply(toml::from_str(text)?);
        Ok(cfg)
    }

    fn apply(&mut self, file: ConfigFile) {
        if let Some(v) = file.listen_port {
            self.listen_port = v;
        }
        if let Some(v) = file.decoy_account {
            self.decoy_account = v;
        }
        if let Some(v) = file.decoy_balance {
            self.decoy_balance = v;
        }
        if let Some(p) = file.policy {
            self.policy.merge(&p);
        }
        if let Some(v) = file.backend_url {
            self.backend_url = v;
        }
        if let Some(v) = file.log_path {
            self.log_path = v;
        }
    }

    /// Applies `RPCLURE_*` overrides from an environment lookup.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        let invalid = |key: &str, reason: String| ConfigError::Invalid {
            key: key.into(),
            reason,
        };
        if let Some(v) = lookup("RPCLURE_PORT") {
            self.listen_port = v.parse().map_err(|e| invalid("RPCLURE_PORT", format!("{e}")))?;
        }
        if let Some(v) = lookup("RPCLURE_DECOY_ACCOUNT") {
            self.decoy_account = v.parse().map_err(|e| invalid("RPCLURE_DECOY_ACCOUNT", format!("{e}")))?;
        }
        if let Some(v) = lookup("RPCLURE_DECOY_BALANCE") {
            self.decoy_balance = v.parse().map_err(|e| invalid("RPCLURE_DECOY_BALANCE", format!("{e}")))?;
        }
        if let Some(v) = lookup("RPCLURE_BACKEND") {
            self.backend_url = v;
        }
        if let Some(v) = lookup("RPCLURE_LOG") {
            self.log_path = v.into();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::PolicyAction;

    #[test]
    fn toml_overrides_and_policy_merge() {
        let cfg = HoneypotConfig::from_toml_str(
            r#"
listen_port = 9545
decoy_balance = "0x10"
[policy]
eth_getBalance = "emulate"
admin_peers = "deny"
"#,
        )
        .unwrap();
        assert_eq!(cfg.listen_port, 9545);
        assert_eq!(cfg.decoy_balance, Wei::from(16u64));
        assert_eq!(cfg.policy.classify("eth_getBalance"), PolicyAction::Emulate);
        assert_eq!(cfg.policy.classify("eth_sendTransaction"), PolicyAction::Emulate);
    }

    #[test]
    fn bad_decoy_rejected() {
        assert!(HoneypotConfig::from_toml_str("decoy_account = \"0x1234\"").is_err());
        assert!(HoneypotConfig::from_toml_str("unknown_key = 1").is_err());
    }

    #[test]
    fn env_overrides() {
        let mut cfg = HoneypotConfig::default();
        cfg.apply_env(|k| (k == "RPCLURE_PORT").then(|| "7000".to_string()))
            .unwrap();
        assert_eq!(cfg.listen_port, 7000);
        assert!(cfg
            .apply_env(|k| (k == "RPCLURE_PORT").then(|| "x".to_string()))
            .is_err());
    }
}
