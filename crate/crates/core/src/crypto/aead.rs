use std::fmt;

use chacha20poly1305::aead::{Aead, KeyInit, Payload};
use chacha20poly1305::{ChaCha20Poly1305, Key, Nonce};
use rand::RngCore;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::encoding::{Canonical, Encoder};
use super::hash::hash_parts;
use super::CryptoError;

pub const KEY_LEN: usize = 32;
const NONCE_LEN: usize = 12;

/// 256-bit symmetric key. Used both for ECDH-derived shared keys and for
/// one-time data keys.
#[derive(Clone, PartialEq, Eq)]
pub struct SymmetricKey([u8; KEY_LEN]);

/// Shared key between an account and the enclave network.
pub type SharedKey = SymmetricKey;

impl SymmetricKey {
    pub fn from_bytes(bytes: [u8; KEY_LEN]) -> Self {
        SymmetricKey(bytes)
    }

    pub fn from_slice(bytes: &[u8]) -> Result<Self, CryptoError> {
        let arr: [u8; KEY_LEN] = bytes.try_into().map_err(|_| CryptoError::InvalidKey)?;
        Ok(SymmetricKey(arr))
    }

    pub fn as_bytes(&self) -> &[u8; KEY_LEN] {
        &self.0
    }
}

impl fmt::Debug for SymmetricKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SymmetricKey(<redacted>)")
    }
}

/// `nonce || ChaCha20-Poly1305 output`.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Ciphertext(pub Vec<u8>);

impl Ciphertext {
    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }
}

impl fmt::Debug for Ciphertext {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Ciphertext({} bytes)", self.0.len())
    }
}

impl Serialize for Ciphertext {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(&self.0))
    }
}

impl<'de> Deserialize<'de> for Ciphertext {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map(Ciphertext).map_err(serde::de::Error::custom)
    }
}

impl Canonical for Ciphertext {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_opaque(&self.0);
    }
}

/// Authenticated encryption bound to `context`.
///
/// The nonce is derived from key, context and plaintext, so encryption is a
/// deterministic function of its inputs and whole runs replay bit-identically.
/// Keys are either one-time or paired with a context naming the slot, so
/// equal ciphertexts only arise for equal (key, slot, plaintext).
pub fn sym_encrypt(key: &SymmetricKey, plaintext: &[u8], context: &[u8]) -> Ciphertext {
    let nonce_src = hash_parts(&[b"decloak/nonce", &key.0, context, plaintext]);
    let nonce_bytes = &nonce_src.as_bytes()[..NONCE_LEN];
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    let body = cipher
        .encrypt(Nonce::from_slice(nonce_bytes), Payload { msg: plaintext, aad: context })
        .expect("chacha20poly1305 encryption is infallible for in-memory buffers");
    let mut out = Vec::with_capacity(NONCE_LEN + body.len());
    out.extend_from_slice(nonce_bytes);
    out.extend_from_slice(&body);
    Ciphertext(out)
}

pub fn sym_decrypt(
    key: &SymmetricKey,
    ciphertext: &Ciphertext,
    context: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if ciphertext.0.len() < NONCE_LEN {
        return Err(CryptoError::AuthFailure);
    }
    let (nonce, body) = ciphertext.0.split_at(NONCE_LEN);
    let cipher = ChaCha20Poly1305::new(Key::from_slice(&key.0));
    cipher
        .decrypt(Nonce::from_slice(nonce), Payload { msg: body, aad: context })
        .map_err(|_| CryptoError::AuthFailure)
}

/// Seeded one-time key source, `Gen(1^kappa)`.
pub struct KeyGenerator {
    rng: ChaCha20Rng,
    kappa: u32,
}

impl KeyGenerator {
    /// Only `kappa = 256` is supported by the underlying cipher.
    pub fn new(seed: u64, kappa: u32) -> Result<Self, CryptoError> {
        if kappa as usize != KEY_LEN * 8 {
            return Err(CryptoError::UnsupportedKappa(kappa));
        }
        Ok(KeyGenerator { rng: ChaCha20Rng::seed_from_u64(seed), kappa })
    }

    pub fn kappa(&self) -> u32 {
        self.kappa
    }

    pub fn next_key(&mut self) -> SymmetricKey {
        let mut k = [0u8; KEY_LEN];
        self.rng.fill_bytes(&mut k);
        SymmetricKey(k)
    }
}

impl fmt::Debug for KeyGenerator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyGenerator").field("kappa", &self.kappa).finish_non_exhaustive()
    }
}
