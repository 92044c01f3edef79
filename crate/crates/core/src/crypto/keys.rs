use std::fmt;

use ed25519_dalek::{Signer, SigningKey, Verifier, VerifyingKey};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use x25519_dalek::{PublicKey as DhPublic, StaticSecret};

use super::aead::SymmetricKey;
use super::encoding::{Canonical, Encoder};
use super::hash::{hash_bytes, hash_parts};
use super::CryptoError;

/// Address width used when none is configured.
pub const DEFAULT_ADDRESS_WIDTH: usize = 20;
pub const SIGNATURE_LEN: usize = 64;
pub const PUBLIC_KEY_LEN: usize = 64;

/// Account address: a truncated digest of the public key.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(Vec<u8>);

impl Address {
    pub fn from_bytes(bytes: Vec<u8>) -> Self {
        Address(bytes)
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.0
    }

    pub fn width(&self) -> usize {
        self.0.len()
    }

    pub fn to_hex(&self) -> String {
        format!("0x{}", hex::encode(&self.0))
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        let s = s.strip_prefix("0x").unwrap_or(s);
        hex::decode(s).ok().map(Address)
    }
}

impl fmt::Debug for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{}", hex::encode(&self.0[..self.0.len().min(4)]))
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Address {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Address {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Address::from_hex(&s).ok_or_else(|| serde::de::Error::custom("bad address hex"))
    }
}

impl Canonical for Address {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_bytes(&self.0);
    }
}

/// Signing key plus key-agreement key, both derived from one 32-byte seed.
#[derive(Clone)]
pub struct SecretKey {
    signing: SigningKey,
    dh: StaticSecret,
}

impl SecretKey {
    fn from_seed(seed: &[u8]) -> Self {
        let root = hash_parts(&[b"decloak/account", seed]);
        let sign_seed = hash_parts(&[b"decloak/sign", root.as_bytes()]);
        let dh_seed = hash_parts(&[b"decloak/dh", root.as_bytes()]);
        SecretKey {
            signing: SigningKey::from_bytes(sign_seed.as_bytes()),
            dh: StaticSecret::from(*dh_seed.as_bytes()),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey {
            sign: self.signing.verifying_key().to_bytes(),
            dh: DhPublic::from(&self.dh).to_bytes(),
        }
    }
}

impl fmt::Debug for SecretKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("SecretKey(<redacted>)")
    }
}

/// Verification key and key-agreement public key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey {
    sign: [u8; 32],
    dh: [u8; 32],
}

impl PublicKey {
    pub fn to_bytes(&self) -> [u8; PUBLIC_KEY_LEN] {
        let mut out = [0u8; PUBLIC_KEY_LEN];
        out[..32].copy_from_slice(&self.sign);
        out[32..].copy_from_slice(&self.dh);
        out
    }

    /// Parses 64 bytes; rejects wrong lengths and invalid verification keys.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CryptoError> {
        if bytes.len() != PUBLIC_KEY_LEN {
            return Err(CryptoError::InvalidKey);
        }
        let sign: [u8; 32] = bytes[..32].try_into().expect("length checked");
        let dh: [u8; 32] = bytes[32..].try_into().expect("length checked");
        VerifyingKey::from_bytes(&sign).map_err(|_| CryptoError::InvalidKey)?;
        Ok(PublicKey { sign, dh })
    }

    /// Address of `width` bytes derived from this key.
    pub fn address(&self, width: usize) -> Address {
        let digest = hash_bytes(&self.to_bytes());
        Address(digest.as_bytes()[..width.min(32)].to_vec())
    }
}

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.sign[..4]))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.to_bytes()))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        PublicKey::from_bytes(&bytes).map_err(serde::de::Error::custom)
    }
}

impl Canonical for PublicKey {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_bytes(&self.to_bytes());
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct Signature(pub [u8; SIGNATURE_LEN]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({})", hex::encode(&self.0[..4]))
    }
}

impl Serialize for Signature {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for Signature {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let bytes = hex::decode(s).map_err(serde::de::Error::custom)?;
        let arr: [u8; SIGNATURE_LEN] =
            bytes.try_into().map_err(|_| serde::de::Error::custom("bad signature length"))?;
        Ok(Signature(arr))
    }
}

impl Canonical for Signature {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_opaque(&self.0);
    }
}

/// `(sk, pk, ad)` triple.
#[derive(Clone)]
pub struct Account {
    pub sk: SecretKey,
    pub pk: PublicKey,
    pub ad: Address,
}

impl Account {
    pub fn from_seed_with_width(seed: &[u8], address_width: usize) -> Self {
        let sk = SecretKey::from_seed(seed);
        let pk = sk.public_key();
        let ad = pk.address(address_width);
        Account { sk, pk, ad }
    }
}

impl fmt::Debug for Account {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Account").field("ad", &self.ad).finish_non_exhaustive()
    }
}

/// Deterministic account for `seed` with the default address width.
pub fn keygen_account(seed: &[u8]) -> Account {
    Account::from_seed_with_width(seed, DEFAULT_ADDRESS_WIDTH)
}

/// Non-interactive shared key: `derive_shared(a.sk, b.pk) == derive_shared(b.sk, a.pk)`.
pub fn derive_shared(sk: &SecretKey, pk: &PublicKey) -> Result<SymmetricKey, CryptoError> {
    let shared = sk.dh.diffie_hellman(&DhPublic::from(pk.dh));
    if !shared.was_contributory() {
        return Err(CryptoError::InvalidKey);
    }
    let key = hash_parts(&[b"decloak/ecdh", shared.as_bytes()]);
    Ok(SymmetricKey::from_bytes(*key.as_bytes()))
}

pub fn sign(sk: &SecretKey, message: &[u8]) -> Signature {
    Signature(sk.signing.sign(message).to_bytes())
}

pub fn verify_sig(pk: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    let Ok(vk) = VerifyingKey::from_bytes(&pk.sign) else {
        return false;
    };
    vk.verify(message, &ed25519_dalek::Signature::from_bytes(&signature.0)).is_ok()
}
