//! Launch configuration and its measurement.

use duet_core::lang::{parse_type, MatrixTy, ParseError, Ty};
use rust_decimal::Decimal;
use thiserror::Error;

use crate::keys::canonical_digest;
use crate::quote::{Budget, Measurement};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {0}: expected `key=value`")]
    Syntax(usize),
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: `{key}` given twice")]
    Duplicate { line: usize, key: &'static str },
    #[error("missing `{0}`")]
    Missing(&'static str),
    #[error("`{key}` is not a decimal: `{value}`")]
    Number { key: &'static str, value: String },
    #[error("epsilon must be positive, got {0}")]
    NonPositiveEpsilon(Decimal),
    #[error("delta must not be negative, got {0}")]
    NegativeDelta(Decimal),
    #[error("schema: {0}")]
    Schema(ParseError),
    #[error("schema must be a matrix type, got `{0}`")]
    NotMatrix(Ty),
    #[error("build_id must not be empty")]
    EmptyBuildId,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnclaveConfig {
    pub epsilon: Decimal,
    pub delta: Decimal,
    pub schema: MatrixTy,
    pub build_id: String,
}

const KEYS: [&str; 4] = ["epsilon", "delta", "schema", "build_id"];

impl EnclaveConfig {
    pub fn new(
        epsilon: Decimal,
        delta: Decimal,
        schema_text: &str,
        build_id: &str,
    ) -> Result<Self, ConfigError> {
        if epsilon <= Decimal::ZERO {
            return Err(ConfigError::NonPositiveEpsilon(epsilon));
        }
        if delta < Decimal::ZERO {
            return Err(ConfigError::NegativeDelta(delta));
        }
        if build_id.trim().is_empty() {
            return Err(ConfigError::EmptyBuildId);
        }
        let schema = match parse_type(schema_text).map_err(ConfigError::Schema)? {
            Ty::Matrix(m) => m,
            other => return Err(ConfigError::NotMatrix(other)),
        };
        Ok(EnclaveConfig {
            epsilon,
            delta,
            schema,
            build_id: build_id.trim().to_string(),
        })
    }

    /// `key=value` lines; blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut values: [Option<&str>; 4] = [None; 4];
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            let k = k.trim();
            let slot = KEYS.iter().position(|&known| known == k).ok_or_else(|| {
                ConfigError::UnknownKey {
                    line: i + 1,
                    key: k.to_string(),
                }
            })?;
            if values[slot].replace(v.trim()).is_some() {
                return Err(ConfigError::Duplicate {
                    line: i + 1,
                    key: KEYS[slot],
                });
            }
        }
        let get = |slot: usize| values[slot].ok_or(ConfigError::Missing(KEYS[slot]));
        let number = |slot: usize| -> Result<Decimal, ConfigError> {
            let v = get(slot)?;
            v.parse().map_err(|_| ConfigError::Number {
                key: KEYS[slot],
                value: v.to_string(),
            })
        };
        EnclaveConfig::new(number(0)?, number(1)?, get(2)?, get(3)?)
    }

    pub fn budget(&self) -> Budget {
        Budget::new(self.epsilon, self.delta)
    }

    /// Normalized text of the measured settings; build id excluded.
    pub fn canonical(&self) -> String {
        format!(
            "epsilon={}\ndelta={}\nschema={}\n",
            self.epsilon,
            self.delta,
            Ty::Matrix(self.schema.clone())
        )
    }

    pub fn measurement(&self) -> Measurement {
        canonical_digest(&[self.build_id.as_bytes(), self.canonical().as_bytes()])
    }
}
