//! Key material and the canonical signing encoding.
//!
//! The simulated hardware root is an Ed25519 key standing in for the key
//! fused into the CPU. Each enclave instance holds an Ed25519 key for
//! budget signatures and an X25519 key for envelope decryption; the two
//! public halves travel together as one 64-byte [`EnclavePublicKey`].

use std::fmt;

use ed25519_dalek::pkcs8::spki::der::pem::LineEnding;
use ed25519_dalek::pkcs8::{DecodePrivateKey, DecodePublicKey, EncodePrivateKey, EncodePublicKey};
use ed25519_dalek::{Signature, Signer, SigningKey, Verifier, VerifyingKey};
use rand::rngs::OsRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};
use thiserror::Error;
use x25519_dalek::{PublicKey as ExchangePublic, StaticSecret};

pub const ENCLAVE_KEY_LABEL: &str = "DUET ENCLAVE PUBLIC KEY";
pub const SIGNATURE_LEN: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KeyError {
    #[error("malformed PEM: {0}")]
    Pem(String),
    #[error("expected PEM label `{expected}`, found `{found}`")]
    Label { expected: &'static str, found: String },
    #[error("enclave public key must be 64 bytes, found {0}")]
    Length(usize),
}

/// SHA-256 over the fields, each prefixed by its byte length as a big-endian u32.
pub fn canonical_digest(fields: &[&[u8]]) -> [u8; 32] {
    let mut h = Sha256::new();
    for f in fields {
        let len = u32::try_from(f.len()).expect("field shorter than 4 GiB");
        h.update(len.to_be_bytes());
        h.update(f);
    }
    h.finalize().into()
}

fn verify_with(key: &VerifyingKey, digest: &[u8; 32], sig: &[u8]) -> bool {
    let Ok(sig) = Signature::from_slice(sig) else {
        return false;
    };
    key.verify(digest, &sig).is_ok()
}

/// The simulated attestation root. Only the platform holds this; verifiers
/// get [`RootPublicKey`].
pub struct HardwareRoot {
    key: SigningKey,
}

impl HardwareRoot {
    pub fn generate() -> Self {
        HardwareRoot {
            key: SigningKey::generate(&mut OsRng),
        }
    }

    pub fn from_pkcs8_pem(text: &str) -> Result<Self, KeyError> {
        SigningKey::from_pkcs8_pem(text)
            .map(|key| HardwareRoot { key })
            .map_err(|e| KeyError::Pem(e.to_string()))
    }

    pub fn to_pkcs8_pem(&self) -> String {
        self.key
            .to_pkcs8_pem(LineEnding::LF)
            .expect("ed25519 keys always encode")
            .to_string()
    }

    pub fn public(&self) -> RootPublicKey {
        RootPublicKey(self.key.verifying_key())
    }

    pub(crate) fn sign(&self, digest: &[u8; 32]) -> [u8; SIGNATURE_LEN] {
        self.key.sign(digest).to_bytes()
    }
}

impl fmt::Debug for HardwareRoot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("HardwareRoot")
            .field("public", &self.public())
            .finish_non_exhaustive()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct RootPublicKey(VerifyingKey);

impl RootPublicKey {
    /// SubjectPublicKeyInfo PEM.
    pub fn to_pem(&self) -> String {
        self.0
            .to_public_key_pem(LineEnding::LF)
            .expect("ed25519 keys always encode")
    }

    pub fn from_pem(text: &str) -> Result<Self, KeyError> {
        VerifyingKey::from_public_key_pem(text)
            .map(RootPublicKey)
            .map_err(|e| KeyError::Pem(e.to_string()))
    }

    pub fn verify(&self, digest: &[u8; 32], sig: &[u8]) -> bool {
        verify_with(&self.0, digest, sig)
    }
}

impl fmt::Debug for RootPublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RootPublicKey({})", hex::encode(self.0.as_bytes()))
    }
}

/// Ed25519 verifying key followed by X25519 public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct EnclavePublicKey {
    bytes: [u8; 64],
}

impl EnclavePublicKey {
    pub fn from_bytes(bytes: [u8; 64]) -> Self {
        EnclavePublicKey { bytes }
    }

    pub fn as_bytes(&self) -> &[u8; 64] {
        &self.bytes
    }

    pub fn to_pem(&self) -> String {
        pem::encode(&pem::Pem::new(ENCLAVE_KEY_LABEL, self.bytes.to_vec()))
    }

    pub fn from_pem(text: &str) -> Result<Self, KeyError> {
        let p = pem::parse(text).map_err(|e| KeyError::Pem(e.to_string()))?;
        if p.tag() != ENCLAVE_KEY_LABEL {
            return Err(KeyError::Label {
                expected: ENCLAVE_KEY_LABEL,
                found: p.tag().to_string(),
            });
        }
        let bytes: [u8; 64] = p
            .contents()
            .try_into()
            .map_err(|_| KeyError::Length(p.contents().len()))?;
        Ok(EnclavePublicKey { bytes })
    }

    pub(crate) fn exchange(&self) -> ExchangePublic {
        let mut x = [0u8; 32];
        x.copy_from_slice(&self.bytes[32..]);
        ExchangePublic::from(x)
    }

    /// False for a bad signature and for a signing half that is not a valid point.
    pub fn verify(&self, digest: &[u8; 32], sig: &[u8]) -> bool {
        let mut v = [0u8; 32];
        v.copy_from_slice(&self.bytes[..32]);
        match VerifyingKey::from_bytes(&v) {
            Ok(key) => verify_with(&key, digest, sig),
            Err(_) => false,
        }
    }
}

impl fmt::Debug for EnclavePublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EnclavePublicKey({})", hex::encode(self.bytes))
    }
}

impl Serialize for EnclavePublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_pem())
    }
}

impl<'de> Deserialize<'de> for EnclavePublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        EnclavePublicKey::from_pem(&text).map_err(serde::de::Error::custom)
    }
}

/// Private keys of one enclave instance. Never serialized; both halves
/// zeroize on drop.
pub(crate) struct EnclaveKeys {
    signing: SigningKey,
    exchange: StaticSecret,
}

impl EnclaveKeys {
    pub(crate) fn generate() -> Self {
        EnclaveKeys {
            signing: SigningKey::generate(&mut OsRng),
            exchange: StaticSecret::random_from_rng(OsRng),
        }
    }

    pub(crate) fn public(&self) -> EnclavePublicKey {
        let mut bytes = [0u8; 64];
        bytes[..32].copy_from_slice(self.signing.verifying_key().as_bytes());
        bytes[32..].copy_from_slice(ExchangePublic::from(&self.exchange).as_bytes());
        EnclavePublicKey { bytes }
    }

    pub(crate) fn sign(&self, digest: &[u8; 32]) -> [u8; SIGNATURE_LEN] {
        self.signing.sign(digest).to_bytes()
    }

    pub(crate) fn exchange(&self) -> &StaticSecret {
        &self.exchange
    }

    #[cfg(feature = "testkit")]
    pub(crate) fn secret_bytes(&self) -> Vec<Vec<u8>> {
        vec![self.signing.to_bytes().to_vec(), self.exchange.to_bytes().to_vec()]
    }
}
