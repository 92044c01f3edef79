//! The on-chain commitment `[Enc_kd(d), Enc_kie(kd), owner]`.
//!
//! The data slot is encrypted under a fresh one-time key; the key slot holds
//! that one-time key encrypted under the key shared between the owner and the
//! enclave network. Either side derives the shared key on its own, so both the
//! owner and any enclave can open a complete commitment. A stripped commitment
//! (no key slot) opens for nobody.

use serde::{Deserialize, Serialize};

use super::aead::{sym_decrypt, sym_encrypt, Ciphertext, SymmetricKey};
use super::encoding::{Canonical, Encoder};
use super::hash::hash;
use super::keys::{derive_shared, Address, PublicKey, SecretKey};
use super::CryptoError;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Commitment {
    pub data_ct: Ciphertext,
    pub key_ct: Option<Ciphertext>,
    pub owner: Address,
}

impl Canonical for Commitment {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.data_ct).put_option(self.key_ct.as_ref()).put(&self.owner);
    }
}

fn data_context(owner: &Address) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_str("decloak/commit-data").put(owner);
    enc.finish()
}

fn key_context(owner: &Address, data_ct: &Ciphertext) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_str("decloak/commit-key").put(owner).put(&hash(data_ct));
    enc.finish()
}

/// Builds a complete commitment for `owner`.
pub fn commit_private(
    data: &[u8],
    one_time_key: &SymmetricKey,
    shared: &SymmetricKey,
    owner: &Address,
) -> Commitment {
    let data_ct = sym_encrypt(one_time_key, data, &data_context(owner));
    let key_ct = wrap_data_key(one_time_key, shared, owner, &data_ct);
    Commitment { data_ct, key_ct: Some(key_ct), owner: owner.clone() }
}

/// Encrypts a commitment's one-time key for its key slot. The slot is bound to
/// the data ciphertext so it cannot be moved onto another commitment.
pub fn wrap_data_key(
    one_time_key: &SymmetricKey,
    shared: &SymmetricKey,
    owner: &Address,
    data_ct: &Ciphertext,
) -> Ciphertext {
    sym_encrypt(shared, one_time_key.as_bytes(), &key_context(owner, data_ct))
}

/// The commitment without its key slot.
pub fn strip_key_slot(c: &Commitment) -> Commitment {
    Commitment { data_ct: c.data_ct.clone(), key_ct: None, owner: c.owner.clone() }
}

/// Re-attaches a key slot to a stripped commitment.
pub fn attach_key_slot(c: &Commitment, key_ct: Ciphertext) -> Commitment {
    Commitment { data_ct: c.data_ct.clone(), key_ct: Some(key_ct), owner: c.owner.clone() }
}

/// Recovers the one-time key from the key slot using an already derived shared key.
pub fn unwrap_data_key(shared: &SymmetricKey, c: &Commitment) -> Result<SymmetricKey, CryptoError> {
    let key_ct = c.key_ct.as_ref().ok_or(CryptoError::MissingKeySlot)?;
    let raw = sym_decrypt(shared, key_ct, &key_context(&c.owner, &c.data_ct))?;
    SymmetricKey::from_slice(&raw).map_err(|_| CryptoError::AuthFailure)
}

/// Decrypts the data slot with a known one-time key.
pub fn open_with_data_key(one_time_key: &SymmetricKey, c: &Commitment) -> Result<Vec<u8>, CryptoError> {
    sym_decrypt(one_time_key, &c.data_ct, &data_context(&c.owner))
}

/// State construction: `k_ie = ECDH(sk, peer_pk)`, `k_d = Dec_kie(key slot)`,
/// `d = Dec_kd(data slot)`.
///
/// The owner opens with `(sk_owner, pk_network)`; an enclave opens with
/// `(sk_network, pk_owner)`.
pub fn open_commitment(sk: &SecretKey, peer_pk: &PublicKey, c: &Commitment) -> Result<Vec<u8>, CryptoError> {
    if c.key_ct.is_none() {
        return Err(CryptoError::MissingKeySlot);
    }
    let shared = derive_shared(sk, peer_pk)?;
    let data_key = unwrap_data_key(&shared, c)?;
    open_with_data_key(&data_key, c)
}
