//! Simulated trusted enclave for the differentially private query server.
//!
//! [`Enclave`] owns the decrypted rows, the private keys and the privacy
//! budget. Outside code reaches it only through the framed protocol in
//! [`boundary`], and learns nothing from it beyond quotes, signed budgets,
//! row counts and mechanism outputs.
//!
//! Data owners check a [`Quote`] with [`verify_quote`] against a root public
//! key and an expected measurement, then seal rows with [`Envelope::seal`]
//! to the public key carried inside the quote.

pub mod boundary;
pub mod config;
mod enclave;
pub mod envelope;
pub mod keys;
pub mod quote;

pub use config::{ConfigError, EnclaveConfig};
pub use enclave::{BudgetExhausted, Enclave, IngestError, QueryError, QueryResult};
pub use envelope::{DecryptError, Envelope, MalformedEnvelope};
pub use keys::{EnclavePublicKey, HardwareRoot, KeyError, RootPublicKey};
pub use quote::{verify_quote, Attested, Budget, Challenge, Measurement, Quote, QuoteReject, SignedBudget};
