//! The trusted component.

use std::fmt;
use std::sync::Arc;

use duet_core::checker::{validate_query, Reject};
use duet_core::interp::{apply_query, evaluate, Database, EvalError, SchemaError, ValEnv};
use duet_core::lang::{parse, ParseError, Ty};
use duet_core::mech::{NoiseSource, Sampler};
use serde_json::json;
use thiserror::Error;

use crate::config::EnclaveConfig;
use crate::envelope::{DecryptError, Envelope};
use crate::keys::{EnclaveKeys, EnclavePublicKey, HardwareRoot};
use crate::quote::{Budget, Challenge, Measurement, Quote, SignedBudget};

#[derive(Debug, Error, PartialEq)]
pub enum IngestError {
    #[error(transparent)]
    Decrypt(#[from] DecryptError),
    #[error("payload is not UTF-8 text")]
    NotText,
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

impl IngestError {
    pub fn kind(&self) -> &'static str {
        match self {
            IngestError::Decrypt(_) => "DecryptError",
            IngestError::NotText | IngestError::Schema(_) => "SchemaError",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("query costs {requested} but only {remaining} remains")]
pub struct BudgetExhausted {
    pub requested: Budget,
    pub remaining: Budget,
}

#[derive(Debug, Error, PartialEq)]
pub enum QueryError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Reject(#[from] Reject),
    #[error(transparent)]
    BudgetExhausted(#[from] BudgetExhausted),
    /// Raised after the charge; the budget stays spent.
    #[error("evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

impl QueryError {
    pub fn kind(&self) -> &'static str {
        match self {
            QueryError::Parse(_) => "ParseError",
            QueryError::Reject(r) => r.kind(),
            QueryError::BudgetExhausted(_) => "BudgetExhausted",
            QueryError::Eval(_) => "EvalError",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryResult {
    pub value: f64,
    pub cost: Budget,
    pub remaining: SignedBudget,
}

/// One running enclave. Dropping it destroys the keys, and with them every
/// envelope ever addressed to it.
pub struct Enclave {
    keys: EnclaveKeys,
    public: EnclavePublicKey,
    platform: Arc<HardwareRoot>,
    measurement: Measurement,
    initial: Budget,
    budget: SignedBudget,
    schema: Ty,
    db: Arc<Database>,
    noise: Box<dyn NoiseSource + Send>,
}

impl Enclave {
    /// Launches on `platform` with fresh keys and OS-seeded noise.
    pub fn init(config: &EnclaveConfig, platform: Arc<HardwareRoot>) -> Self {
        Enclave::with_noise(config, platform, Box::new(Sampler::from_entropy()))
    }

    pub fn with_noise(
        config: &EnclaveConfig,
        platform: Arc<HardwareRoot>,
        noise: Box<dyn NoiseSource + Send>,
    ) -> Self {
        let keys = EnclaveKeys::generate();
        let public = keys.public();
        let initial = config.budget();
        let budget = sign_budget(&keys, initial, 0);
        Enclave {
            keys,
            public,
            platform,
            measurement: config.measurement(),
            initial,
            budget,
            schema: Ty::Matrix(config.schema.clone()),
            db: Arc::new(Database::new(config.schema.clone())),
            noise,
        }
    }

    pub fn public_key(&self) -> EnclavePublicKey {
        self.public
    }

    pub fn measurement(&self) -> Measurement {
        self.measurement
    }

    pub fn schema(&self) -> &Ty {
        &self.schema
    }

    pub fn remaining(&self) -> SignedBudget {
        self.budget
    }

    pub fn row_count(&self) -> usize {
        self.db.len()
    }

    pub fn get_quote(&self, nonce: Challenge) -> Quote {
        let mut q = Quote {
            measurement: self.measurement,
            enclave_pubkey: self.public,
            initial_budget: self.initial,
            nonce,
            sig: [0; 64],
        };
        q.sig = self.platform.sign(&q.signed_digest());
        q
    }

    /// Decrypts one row and appends it. Returns the new row count.
    pub fn ingest(&mut self, env: &Envelope) -> Result<usize, IngestError> {
        let plain = env.open(self.keys.exchange())?;
        let text = std::str::from_utf8(&plain).map_err(|_| IngestError::NotText)?;
        let row = self.db.parse_row(text)?;
        Ok(Arc::make_mut(&mut self.db).push_row(row)?)
    }

    /// Subtracts `cost` exactly, or changes nothing.
    pub fn charge(&mut self, cost: Budget) -> Result<SignedBudget, BudgetExhausted> {
        let remaining = self.budget.budget();
        let next = remaining
            .checked_sub(&cost)
            .ok_or(BudgetExhausted {
                requested: cost,
                remaining,
            })?;
        self.budget = sign_budget(&self.keys, next, self.budget.serial + 1);
        Ok(self.budget)
    }

    /// Parse, certify, charge, then run. Nothing is charged unless the
    /// program is certified and affordable.
    pub fn run_query(&mut self, program: &str) -> Result<QueryResult, QueryError> {
        let expr = parse(program)?;
        let cert = validate_query(&expr, &self.schema)?;
        let cost = Budget::from_cost(&cert.cost).expect("certified costs are finite");
        let remaining = self.charge(cost)?;
        let query = evaluate(&expr, &ValEnv::new(), &mut *self.noise)?;
        let value = apply_query(&query, Arc::clone(&self.db), &mut *self.noise)?;
        Ok(QueryResult {
            value,
            cost,
            remaining,
        })
    }

    /// Public state only, for operators.
    pub fn diagnostic_dump(&self) -> serde_json::Value {
        json!({
            "measurement": hex::encode(self.measurement),
            "enclave_pubkey": self.public.to_pem(),
            "initial_budget": self.initial,
            "remaining": self.budget,
            "schema": self.schema.to_string(),
            "rows": self.db.len(),
        })
    }

    /// Raw private key bytes, so tests can prove they appear nowhere else.
    #[cfg(feature = "testkit")]
    pub fn secret_key_bytes(&self) -> Vec<Vec<u8>> {
        self.keys.secret_bytes()
    }
}

fn sign_budget(keys: &EnclaveKeys, b: Budget, serial: u64) -> SignedBudget {
    let mut s = SignedBudget {
        eps: b.eps,
        delta: b.delta,
        serial,
        sig: [0; 64],
    };
    s.sig = keys.sign(&s.signed_digest());
    s
}

impl fmt::Debug for Enclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Enclave")
            .field("measurement", &hex::encode(self.measurement))
            .field("public", &self.public)
            .field("remaining", &self.budget.budget())
            .field("serial", &self.budget.serial)
            .field("rows", &self.db.len())
            .finish_non_exhaustive()
    }
}
