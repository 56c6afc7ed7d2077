//! Attestation quotes and signed budgets.

use std::fmt;

use duet_core::{ExtReal, PrivCost};
use rust_decimal::Decimal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::keys::{canonical_digest, EnclavePublicKey, RootPublicKey};

pub type Measurement = [u8; 32];
pub type Challenge = [u8; 16];

/// A finite (ε, δ) pair. Travels as decimal strings.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    #[serde(with = "rust_decimal::serde::str")]
    pub eps: Decimal,
    #[serde(with = "rust_decimal::serde::str")]
    pub delta: Decimal,
}

impl Budget {
    pub fn new(eps: Decimal, delta: Decimal) -> Self {
        Budget { eps, delta }
    }

    /// None for infinite or negative costs.
    pub fn from_cost(c: &PrivCost) -> Option<Budget> {
        match (c.eps, c.delta) {
            (ExtReal::Finite(eps), ExtReal::Finite(delta)) => Some(Budget { eps, delta }),
            _ => None,
        }
    }

    pub fn fits_within(&self, other: &Budget) -> bool {
        self.eps <= other.eps && self.delta <= other.delta
    }

    pub fn checked_sub(&self, cost: &Budget) -> Option<Budget> {
        if !cost.fits_within(self) {
            return None;
        }
        Some(Budget {
            eps: self.eps.checked_sub(cost.eps)?,
            delta: self.delta.checked_sub(cost.delta)?,
        })
    }
}

impl fmt::Display for Budget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}>", self.eps, self.delta)
    }
}

/// Evidence from the platform that an enclave with `measurement` holds the
/// private half of `enclave_pubkey` and started with `initial_budget`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Quote {
    #[serde(with = "hex::serde")]
    pub measurement: Measurement,
    pub enclave_pubkey: EnclavePublicKey,
    pub initial_budget: Budget,
    #[serde(with = "hex::serde")]
    pub nonce: Challenge,
    #[serde(with = "hex::serde")]
    pub sig: [u8; 64],
}

impl Quote {
    /// Digest of every field but `sig`, in declaration order.
    pub fn signed_digest(&self) -> [u8; 32] {
        canonical_digest(&[
            hex::encode(self.measurement).as_bytes(),
            self.enclave_pubkey.to_pem().as_bytes(),
            self.initial_budget.eps.to_string().as_bytes(),
            self.initial_budget.delta.to_string().as_bytes(),
            hex::encode(self.nonce).as_bytes(),
        ])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
pub enum QuoteReject {
    #[error("quote signature does not verify under the root key")]
    BadSignature,
    #[error("quote measurement is not the expected one")]
    WrongMeasurement,
    #[error("quote does not echo the challenge nonce")]
    NonceMismatch,
}

impl QuoteReject {
    pub fn kind(&self) -> &'static str {
        match self {
            QuoteReject::BadSignature => "BadSignature",
            QuoteReject::WrongMeasurement => "WrongMeasurement",
            QuoteReject::NonceMismatch => "NonceMismatch",
        }
    }
}

/// What a verifier may rely on after a successful check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Attested {
    pub enclave_pubkey: EnclavePublicKey,
    pub initial_budget: Budget,
}

/// Signature first, so nothing unauthenticated influences the outcome.
pub fn verify_quote(
    quote: &Quote,
    root: &RootPublicKey,
    expected_measurement: &Measurement,
    expected_nonce: &Challenge,
) -> Result<Attested, QuoteReject> {
    if !root.verify(&quote.signed_digest(), &quote.sig) {
        return Err(QuoteReject::BadSignature);
    }
    if &quote.measurement != expected_measurement {
        return Err(QuoteReject::WrongMeasurement);
    }
    if &quote.nonce != expected_nonce {
        return Err(QuoteReject::NonceMismatch);
    }
    Ok(Attested {
        enclave_pubkey: quote.enclave_pubkey,
        initial_budget: quote.initial_budget,
    })
}

/// Remaining budget, signed by the enclave key after every change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedBudget {
    #[serde(with = "rust_decimal::serde::str")]
    pub eps: Decimal,
    #[serde(with = "rust_decimal::serde::str")]
    pub delta: Decimal,
    pub serial: u64,
    #[serde(with = "hex::serde")]
    pub sig: [u8; 64],
}

impl SignedBudget {
    pub fn signed_digest(&self) -> [u8; 32] {
        canonical_digest(&[
            self.eps.to_string().as_bytes(),
            self.delta.to_string().as_bytes(),
            self.serial.to_string().as_bytes(),
        ])
    }

    pub fn verify(&self, key: &EnclavePublicKey) -> bool {
        key.verify(&self.signed_digest(), &self.sig)
    }

    pub fn budget(&self) -> Budget {
        Budget::new(self.eps, self.delta)
    }
}
