//! Hybrid record envelopes.
//!
//! A fresh 32-byte data key encrypts the payload with ChaCha20-Poly1305.
//! The data key is wrapped for the enclave by an ephemeral X25519 exchange:
//! HKDF-SHA256 over the shared secret yields a key-encryption key, and
//! `wrapped_key` is the ephemeral public key followed by the AEAD-sealed
//! data key. The payload AEAD authenticates `wrapped_key` as associated
//! data, so the two halves cannot be recombined across envelopes.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use hkdf::Hkdf;
use rand::rngs::OsRng;
use rand::RngCore;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::Sha256;
use thiserror::Error;
use x25519_dalek::{EphemeralSecret, PublicKey as ExchangePublic, StaticSecret};

use crate::keys::EnclavePublicKey;

pub const NONCE_LEN: usize = 12;
pub const TAG_LEN: usize = 16;
/// Ephemeral public key plus sealed 32-byte data key.
pub const WRAPPED_KEY_LEN: usize = 32 + 32 + TAG_LEN;

const KEK_INFO: &[u8] = b"duet envelope key wrap v1";

/// Deliberately uninformative: wrong key, tampering and truncation all look alike.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Error)]
#[error("envelope failed to decrypt or authenticate")]
pub struct DecryptError;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("malformed envelope: {0}")]
pub struct MalformedEnvelope(pub String);

#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Envelope {
    #[serde(with = "b64")]
    pub wrapped_key: Vec<u8>,
    #[serde(with = "b64")]
    pub nonce: Vec<u8>,
    #[serde(with = "b64")]
    pub ciphertext: Vec<u8>,
}

mod b64 {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let text = String::deserialize(d)?;
        STANDARD.decode(text).map_err(serde::de::Error::custom)
    }
}

fn kek(shared: &[u8; 32], eph: &[u8; 32], recipient: &[u8; 32]) -> Key {
    let mut salt = [0u8; 64];
    salt[..32].copy_from_slice(eph);
    salt[32..].copy_from_slice(recipient);
    let mut out = Key::default();
    Hkdf::<Sha256>::new(Some(&salt), shared)
        .expand(KEK_INFO, &mut out)
        .expect("32 bytes is a valid HKDF-SHA256 output length");
    out
}

impl Envelope {
    /// Encrypts `payload` so that only the holder of `to`'s private key can open it.
    pub fn seal(payload: &[u8], to: &EnclavePublicKey) -> Envelope {
        let recipient = to.exchange();
        let eph = EphemeralSecret::random_from_rng(OsRng);
        let eph_pub = ExchangePublic::from(&eph);
        let shared = eph.diffie_hellman(&recipient);
        let kek = kek(shared.as_bytes(), eph_pub.as_bytes(), recipient.as_bytes());

        let mut data_key = Key::default();
        OsRng.fill_bytes(&mut data_key);
        // The KEK is single-use, so a fixed nonce is safe here.
        let sealed_key = ChaCha20Poly1305::new(&kek)
            .encrypt(&Nonce::default(), data_key.as_slice())
            .expect("in-memory AEAD encryption");
        let mut wrapped_key = eph_pub.as_bytes().to_vec();
        wrapped_key.extend_from_slice(&sealed_key);

        let mut nonce = [0u8; NONCE_LEN];
        OsRng.fill_bytes(&mut nonce);
        let ciphertext = ChaCha20Poly1305::new(&data_key)
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: payload,
                    aad: &wrapped_key,
                },
            )
            .expect("in-memory AEAD encryption");
        Envelope {
            wrapped_key,
            nonce: nonce.to_vec(),
            ciphertext,
        }
    }

    /// Field presence and lengths only; says nothing about authenticity.
    pub fn check_structure(&self) -> Result<(), MalformedEnvelope> {
        if self.wrapped_key.len() != WRAPPED_KEY_LEN {
            return Err(MalformedEnvelope(format!(
                "wrapped_key must be {WRAPPED_KEY_LEN} bytes, found {}",
                self.wrapped_key.len()
            )));
        }
        if self.nonce.len() != NONCE_LEN {
            return Err(MalformedEnvelope(format!(
                "nonce must be {NONCE_LEN} bytes, found {}",
                self.nonce.len()
            )));
        }
        if self.ciphertext.len() < TAG_LEN {
            return Err(MalformedEnvelope(format!(
                "ciphertext must be at least {TAG_LEN} bytes, found {}",
                self.ciphertext.len()
            )));
        }
        Ok(())
    }

    pub fn from_json(value: serde_json::Value) -> Result<Envelope, MalformedEnvelope> {
        let env: Envelope =
            serde_json::from_value(value).map_err(|e| MalformedEnvelope(e.to_string()))?;
        env.check_structure()?;
        Ok(env)
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("envelope fields are strings")
    }

    pub(crate) fn open(&self, secret: &StaticSecret) -> Result<Vec<u8>, DecryptError> {
        self.check_structure().map_err(|_| DecryptError)?;
        let mut eph = [0u8; 32];
        eph.copy_from_slice(&self.wrapped_key[..32]);
        let eph = ExchangePublic::from(eph);
        let shared = secret.diffie_hellman(&eph);
        if !shared.was_contributory() {
            return Err(DecryptError);
        }
        let own = ExchangePublic::from(secret);
        let kek = kek(shared.as_bytes(), eph.as_bytes(), own.as_bytes());
        let data_key = ChaCha20Poly1305::new(&kek)
            .decrypt(&Nonce::default(), &self.wrapped_key[32..])
            .map_err(|_| DecryptError)?;
        ChaCha20Poly1305::new(Key::from_slice(&data_key))
            .decrypt(
                Nonce::from_slice(&self.nonce),
                Payload {
                    msg: &self.ciphertext,
                    aad: &self.wrapped_key,
                },
            )
            .map_err(|_| DecryptError)
    }
}

impl std::fmt::Debug for Envelope {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Envelope")
            .field("wrapped_key", &STANDARD.encode(&self.wrapped_key))
            .field("nonce", &STANDARD.encode(&self.nonce))
            .field("ciphertext_len", &self.ciphertext.len())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::keys::EnclaveKeys;

    #[test]
    fn seal_then_open() {
        let keys = EnclaveKeys::generate();
        let env = Envelope::seal(b"44.47,-73.21", &keys.public());
        assert_eq!(env.wrapped_key.len(), WRAPPED_KEY_LEN);
        assert_eq!(env.open(keys.exchange()).unwrap(), b"44.47,-73.21");
    }

    #[test]
    fn every_bit_flip_is_detected() {
        let keys = EnclaveKeys::generate();
        let env = Envelope::seal(b"1.5,2.5", &keys.public());
        fn fields(e: &mut Envelope, which: usize) -> &mut Vec<u8> {
            match which {
                0 => &mut e.wrapped_key,
                1 => &mut e.nonce,
                _ => &mut e.ciphertext,
            }
        }
        for which in 0..3 {
            let len = fields(&mut env.clone(), which).len();
            for bit in 0..len * 8 {
                let mut bad = env.clone();
                fields(&mut bad, which)[bit / 8] ^= 1 << (bit % 8);
                assert_eq!(bad.open(keys.exchange()), Err(DecryptError), "field {which} bit {bit}");
            }
        }
    }

    #[test]
    fn other_key_cannot_open() {
        let a = EnclaveKeys::generate();
        let b = EnclaveKeys::generate();
        let env = Envelope::seal(b"1,2", &a.public());
        assert_eq!(env.open(b.exchange()), Err(DecryptError));
    }

    #[test]
    fn swapped_wrapped_key_is_rejected() {
        let keys = EnclaveKeys::generate();
        let x = Envelope::seal(b"1,2", &keys.public());
        let y = Envelope::seal(b"3,4", &keys.public());
        let spliced = Envelope {
            wrapped_key: y.wrapped_key,
            ..x
        };
        assert_eq!(spliced.open(keys.exchange()), Err(DecryptError));
    }

    #[test]
    fn same_row_twice_differs() {
        let keys = EnclaveKeys::generate();
        let a = Envelope::seal(b"44.47,-73.21", &keys.public());
        let b = Envelope::seal(b"44.47,-73.21", &keys.public());
        assert_ne!(a.ciphertext, b.ciphertext);
        assert_ne!(a.wrapped_key, b.wrapped_key);
    }

    #[test]
    fn json_structure_is_checked() {
        let keys = EnclaveKeys::generate();
        let env = Envelope::seal(b"1,2", &keys.public());
        let json = env.to_json();
        assert_eq!(Envelope::from_json(json.clone()).unwrap(), env);

        let mut missing = json.clone();
        missing.as_object_mut().unwrap().remove("wrapped_key");
        assert!(Envelope::from_json(missing).is_err());

        let mut short = json;
        short["nonce"] = serde_json::Value::String(STANDARD.encode([0u8; 4]));
        assert!(Envelope::from_json(short).is_err());

        assert!(Envelope::from_json(serde_json::json!({"wrapped_key": "%%", "nonce": "", "ciphertext": ""})).is_err());
    }

    #[test]
    fn debug_omits_ciphertext() {
        let keys = EnclaveKeys::generate();
        let env = Envelope::seal(b"secret-ish", &keys.public());
        let dbg = format!("{env:?}");
        assert!(!dbg.contains(&STANDARD.encode(&env.ciphertext)));
    }
}
