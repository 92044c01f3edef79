//! Primitives treated as ideal by the rest of the crate: hashing, signatures,
//! key agreement, authenticated encryption and the commitment structure.

mod aead;
mod commitment;
pub mod encoding;
mod hash;
mod keys;

pub use aead::{sym_decrypt, sym_encrypt, Ciphertext, KeyGenerator, SharedKey, SymmetricKey, KEY_LEN};
pub use commitment::{
    attach_key_slot, commit_private, open_commitment, open_with_data_key, strip_key_slot,
    unwrap_data_key, wrap_data_key, Commitment,
};
pub use encoding::{Canonical, Encoder};
pub use hash::{hash, hash_bytes, hash_parts, Digest, DIGEST_LEN};
pub use keys::{
    derive_shared, keygen_account, sign, verify_sig, Account, Address, PublicKey, SecretKey,
    Signature, DEFAULT_ADDRESS_WIDTH, SIGNATURE_LEN, PUBLIC_KEY_LEN,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CryptoError {
    #[error("invalid key material")]
    InvalidKey,
    #[error("authentication failed")]
    AuthFailure,
    #[error("commitment has no key slot")]
    MissingKeySlot,
    #[error("unsupported security parameter {0}; only 256 is available")]
    UnsupportedKappa(u32),
}
