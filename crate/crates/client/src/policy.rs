//! Data-owner policy: what a server must prove before it gets any rows.

use std::path::Path;

use duet_enclave::{Budget, KeyError, Measurement, RootPublicKey};
use rust_decimal::Decimal;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("line {0}: expected `key=value`")]
    Syntax(usize),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("`{key}`: {reason}")]
    Value { key: &'static str, reason: String },
    #[error("root public key: {0}")]
    RootKey(#[from] KeyError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OwnerPolicy {
    pub max_total: Budget,
    pub expected_measurement: Measurement,
    pub root_pubkey: RootPublicKey,
}

const KEYS: [&str; 4] = ["max_epsilon", "max_delta", "measurement", "root_pubkey_file"];

impl OwnerPolicy {
    /// Loads a policy file. `root_pubkey_file` is relative to the policy file.
    pub fn load(path: &Path) -> Result<Self, PolicyError> {
        let io = |p: &Path| {
            let path = p.display().to_string();
            move |source| PolicyError::Io { path, source }
        };
        let text = std::fs::read_to_string(path).map_err(io(path))?;
        let base = path.parent().unwrap_or(Path::new("."));
        OwnerPolicy::parse(&text, |file| {
            let p = base.join(file);
            std::fs::read_to_string(&p).map_err(io(&p))
        })
    }

    /// `read_key` resolves the `root_pubkey_file` value to PEM text.
    pub fn parse(
        text: &str,
        read_key: impl FnOnce(&str) -> Result<String, PolicyError>,
    ) -> Result<Self, PolicyError> {
        let mut values: [Option<&str>; 4] = [None; 4];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(PolicyError::Syntax(i + 1))?;
            let slot = KEYS
                .iter()
                .position(|&known| known == k.trim())
                .ok_or_else(|| PolicyError::UnknownKey {
                    line: i + 1,
                    key: k.trim().to_string(),
                })?;
            values[slot] = Some(v.trim());
        }
        let get = |slot: usize| values[slot].ok_or(PolicyError::Missing(KEYS[slot]));
        let decimal = |slot: usize| -> Result<Decimal, PolicyError> {
            let v: Decimal = get(slot)?.parse().map_err(|e: rust_decimal::Error| PolicyError::Value {
                key: KEYS[slot],
                reason: e.to_string(),
            })?;
            if v.is_sign_negative() {
                return Err(PolicyError::Value {
                    key: KEYS[slot],
                    reason: "must not be negative".into(),
                });
            }
            Ok(v)
        };
        let max_total = Budget::new(decimal(0)?, decimal(1)?);
        let expected_measurement = hex::decode(get(2)?)
            .ok()
            .and_then(|b| Measurement::try_from(b.as_slice()).ok())
            .ok_or(PolicyError::Value {
                key: "measurement",
                reason: "expected 64 hex digits".into(),
            })?;
        let root_pubkey = RootPublicKey::from_pem(&read_key(get(3)?)?)?;
        Ok(OwnerPolicy {
            max_total,
            expected_measurement,
            root_pubkey,
        })
    }
}
