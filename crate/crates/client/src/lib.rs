//! Client side of the query server: attestation, row submission, queries.
//!
//! The client trusts two things, the root public key and the expected
//! measurement in its [`OwnerPolicy`]. The enclave key and every budget are
//! accepted only as far as signatures chain back to those. In particular
//! rows are sealed to the key inside the verified quote, never to the
//! key served at `/pubkeypem`.

use std::time::Duration;

use duet_enclave::boundary::{ErrorPayload, QueryResponse};
use duet_enclave::{
    verify_quote, Budget, EnclavePublicKey, Envelope, Measurement, Quote, QuoteReject,
    SignedBudget,
};
use rand::rngs::OsRng;
use rand::RngCore;
use reqwest::blocking::{Client, Response};
use rust_decimal::Decimal;
use serde::de::DeserializeOwned;
use serde::Deserialize;
use serde_json::json;
use thiserror::Error;

pub mod policy;

pub use policy::{OwnerPolicy, PolicyError};

/// Why the client refused to go ahead with a server.
#[derive(Debug, Error)]
pub enum Abort {
    #[error("attestation failed: {0}")]
    AttestFailed(String),
    #[error("server budget {offered} exceeds the policy maximum {max}")]
    BudgetTooLarge { offered: Budget, max: Budget },
    #[error("transport: {0}")]
    Transport(String),
}

impl Abort {
    pub fn kind(&self) -> &'static str {
        match self {
            Abort::AttestFailed(_) => "AttestFailed",
            Abort::BudgetTooLarge { .. } => "BudgetTooLarge",
            Abort::Transport(_) => "Transport",
        }
    }
}

impl From<QuoteReject> for Abort {
    fn from(r: QuoteReject) -> Self {
        Abort::AttestFailed(r.kind().to_string())
    }
}

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("server error {status} {}: {}", .body.error_kind, .body.detail)]
    Server { status: u16, body: ErrorPayload },
    #[error("transport: {0}")]
    Transport(String),
    #[error("unexpected response: {0}")]
    BadResponse(String),
    #[error("invalid row: {0}")]
    Row(String),
}

impl From<reqwest::Error> for ClientError {
    fn from(e: reqwest::Error) -> Self {
        ClientError::Transport(e.to_string())
    }
}

#[derive(Clone, Debug)]
pub struct Api {
    base: String,
    http: Client,
}

impl Api {
    pub fn new(server_url: &str) -> Self {
        Api {
            base: server_url.trim_end_matches('/').to_string(),
            http: Client::builder()
                .timeout(Duration::from_secs(60))
                .build()
                .expect("http client"),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    fn parse<T: DeserializeOwned>(resp: Response) -> Result<T, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes()?;
        if !status.is_success() {
            let body = serde_json::from_slice(&bytes).unwrap_or_else(|_| ErrorPayload {
                error_kind: "Unstructured".into(),
                detail: String::from_utf8_lossy(&bytes).into_owned(),
            });
            return Err(ClientError::Server {
                status: status.as_u16(),
                body,
            });
        }
        serde_json::from_slice(&bytes).map_err(|e| ClientError::BadResponse(e.to_string()))
    }

    pub fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, ClientError> {
        Api::parse(self.http.get(self.url(path)).send()?)
    }

    pub fn post<T: DeserializeOwned>(&self, path: &str, body: &serde_json::Value) -> Result<T, ClientError> {
        Api::parse(self.http.post(self.url(path)).json(body).send()?)
    }
}

/// A server whose enclave passed attestation under the owner's policy.
#[derive(Clone, Debug)]
pub struct VerifiedServer {
    api: Api,
    pub enclave_pubkey: EnclavePublicKey,
    pub initial_budget: Budget,
    pub measurement: Measurement,
}

/// Attests the server with a fresh challenge and checks its budget against `policy`.
pub fn negotiate(server_url: &str, policy: &OwnerPolicy) -> Result<VerifiedServer, Abort> {
    let api = Api::new(server_url);
    let mut nonce = [0u8; 16];
    OsRng.fill_bytes(&mut nonce);
    let quote: Quote = match api.get(&format!("/attest?nonce={}", hex::encode(nonce))) {
        Ok(q) => q,
        Err(ClientError::Transport(e)) => return Err(Abort::Transport(e)),
        Err(e) => return Err(Abort::AttestFailed(e.to_string())),
    };
    let ok = verify_quote(&quote, &policy.root_pubkey, &policy.expected_measurement, &nonce)?;
    if !ok.initial_budget.fits_within(&policy.max_total) {
        return Err(Abort::BudgetTooLarge {
            offered: ok.initial_budget,
            max: policy.max_total,
        });
    }
    Ok(VerifiedServer {
        api,
        enclave_pubkey: ok.enclave_pubkey,
        initial_budget: ok.initial_budget,
        measurement: quote.measurement,
    })
}

/// Parses `44.47,-73.21` style input. Values must be finite.
pub fn parse_row(text: &str) -> Result<Vec<f64>, ClientError> {
    text.split(',')
        .map(|f| {
            let f = f.trim();
            f.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| ClientError::Row(format!("`{f}` is not a finite number")))
        })
        .collect()
}

/// Seals one row under a fresh data key.
pub fn encrypt_row(row: &[f64], key: &EnclavePublicKey) -> Result<Envelope, ClientError> {
    if let Some(bad) = row.iter().find(|v| !v.is_finite()) {
        return Err(ClientError::Row(format!("{bad} is not finite")));
    }
    let text = row.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
    Ok(Envelope::seal(text.as_bytes(), key))
}

#[derive(Clone, Debug, PartialEq)]
pub struct QueryOutcome {
    pub value: f64,
    pub cost: Budget,
    pub remaining: SignedBudget,
    /// False means the remaining budget was not signed by the attested enclave.
    pub remaining_verified: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BudgetReading {
    pub budget: SignedBudget,
    pub verified: bool,
}

#[derive(Deserialize)]
struct Insert {
    count: usize,
}

#[derive(Deserialize)]
struct EpsilonPart {
    #[serde(with = "rust_decimal::serde::str")]
    eps: Decimal,
    serial: u64,
    #[serde(with = "hex::serde")]
    sig: [u8; 64],
}

#[derive(Deserialize)]
struct DeltaPart {
    #[serde(with = "rust_decimal::serde::str")]
    delta: Decimal,
    serial: u64,
    #[serde(with = "hex::serde")]
    sig: [u8; 64],
}

impl VerifiedServer {
    pub fn api(&self) -> &Api {
        &self.api
    }

    /// Returns the enclave's row count after the insert.
    pub fn submit(&self, row: &[f64]) -> Result<usize, ClientError> {
        let env = encrypt_row(row, &self.enclave_pubkey)?;
        let r: Insert = self.api.post("/insert", &json!({ "envelope": env.to_json() }))?;
        Ok(r.count)
    }

    pub fn query(&self, program: &str) -> Result<QueryOutcome, ClientError> {
        let r: QueryResponse = self.api.post("/query", &json!({ "program": program }))?;
        Ok(QueryOutcome {
            value: r.value,
            cost: r.cost,
            remaining_verified: r.remaining.verify(&self.enclave_pubkey),
            remaining: r.remaining,
        })
    }

    /// Reads `/epsilon` and `/delta` and checks the signature they share.
    pub fn budget(&self) -> Result<BudgetReading, ClientError> {
        // A query landing between the two reads changes the serial; retry once.
        for _ in 0..2 {
            let e: EpsilonPart = self.api.get("/epsilon")?;
            let d: DeltaPart = self.api.get("/delta")?;
            if e.serial != d.serial {
                continue;
            }
            let budget = SignedBudget {
                eps: e.eps,
                delta: d.delta,
                serial: e.serial,
                sig: e.sig,
            };
            let verified = e.sig == d.sig && budget.verify(&self.enclave_pubkey);
            return Ok(BudgetReading { budget, verified });
        }
        Err(ClientError::BadResponse(
            "budget changed between /epsilon and /delta twice".into(),
        ))
    }
}
