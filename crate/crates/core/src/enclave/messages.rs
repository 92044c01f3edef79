//! Off-chain protocol messages exchanged between parties, hosts and enclaves.
//!
//! Party-to-enclave messages are signed by the party and then sealed under the
//! key the party shares with the enclave network, so a host relaying them sees
//! only ciphertext. Enclave broadcasts are signed with the network key.

use serde::{Deserialize, Serialize};

use crate::apps::Value;
use crate::crypto::{
    commit_private, derive_shared, hash, sign, sym_decrypt, sym_encrypt, verify_sig, Account,
    Address, Canonical, Ciphertext, Commitment, Digest, Encoder, PublicKey, SecretKey, Signature,
    SymmetricKey, SIGNATURE_LEN,
};
use crate::protocol::{Proposal, SettledProposal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SealedKind {
    Ack,
    Input,
}

impl SealedKind {
    fn tag(self) -> &'static str {
        match self {
            SealedKind::Ack => "decloak/seal/ack",
            SealedKind::Input => "decloak/seal/input",
        }
    }
}

/// A party's answer to an announced proposal.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Ack {
    pub id_p: Digest,
    pub party: Address,
    pub join: bool,
}

impl Canonical for Ack {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str("decloak/ack").put(&self.id_p).put(&self.party).put_bool(self.join);
    }
}

/// Input `x_i` with its one-time key `k_xi`. The pledge is the digest of the
/// party's own commitment to `x_i`, fixed when the input is first signed.
#[derive(Clone, PartialEq, Eq)]
pub struct InputSubmission {
    pub id_p: Digest,
    pub party: Address,
    pub x: Value,
    pub k_x: SymmetricKey,
    pub pledge: Digest,
}

impl std::fmt::Debug for InputSubmission {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("InputSubmission")
            .field("id_p", &self.id_p)
            .field("party", &self.party)
            .field("pledge", &self.pledge)
            .finish_non_exhaustive()
    }
}

impl Canonical for InputSubmission {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str("decloak/input")
            .put(&self.id_p)
            .put(&self.party)
            .put_bytes(&self.x.to_bytes())
            .put_bytes(self.k_x.as_bytes())
            .put(&self.pledge);
    }
}

/// `c_x`: the commitment a party pledges its input against.
pub fn input_commitment(x: &Value, k_x: &SymmetricKey, shared: &SymmetricKey, party: &Address) -> Commitment {
    commit_private(&x.to_bytes(), k_x, shared, party)
}

/// Does `(x, k_x)` reproduce the pledged commitment digest?
pub fn pledge_matches(
    x: &Value,
    k_x: &SymmetricKey,
    shared: &SymmetricKey,
    party: &Address,
    pledge: &Digest,
) -> bool {
    hash(&input_commitment(x, k_x, shared, party)) == *pledge
}

/// A party-signed message sealed for the enclave network.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sealed {
    pub kind: SealedKind,
    pub from: Address,
    pub from_pk: PublicKey,
    pub ct: Ciphertext,
}

impl Canonical for Sealed {
    fn encode(&self, enc: &mut Encoder) {
        let kind = match self.kind {
            SealedKind::Ack => 0,
            SealedKind::Input => 1,
        };
        enc.put_u8(kind).put(&self.from).put(&self.from_pk).put(&self.ct);
    }
}

fn seal_context(kind: SealedKind, from: &Address) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_str(kind.tag()).put(from);
    enc.finish()
}

fn seal_body<T: Canonical>(account: &Account, network_pk: &PublicKey, kind: SealedKind, body: &T) -> Sealed {
    let body_bytes = body.to_canonical_bytes();
    let signature = sign(&account.sk, &body_bytes);
    let mut plain = body_bytes;
    plain.extend_from_slice(&signature.0);
    let shared = derive_shared(&account.sk, network_pk).expect("network key is a valid point");
    Sealed {
        kind,
        from: account.ad.clone(),
        from_pk: account.pk,
        ct: sym_encrypt(&shared, &plain, &seal_context(kind, &account.ad)),
    }
}

pub fn seal_ack(account: &Account, network_pk: &PublicKey, ack: &Ack) -> Sealed {
    seal_body(account, network_pk, SealedKind::Ack, ack)
}

pub fn seal_input(account: &Account, network_pk: &PublicKey, input: &InputSubmission) -> Sealed {
    seal_body(account, network_pk, SealedKind::Input, input)
}

/// Decrypts and checks the signature and sender binding. Returns the signed body bytes.
fn unseal_bytes(network_sk: &SecretKey, sealed: &Sealed, address_width: usize) -> Option<Vec<u8>> {
    if sealed.from_pk.address(address_width) != sealed.from {
        return None;
    }
    let shared = derive_shared(network_sk, &sealed.from_pk).ok()?;
    let plain = sym_decrypt(&shared, &sealed.ct, &seal_context(sealed.kind, &sealed.from)).ok()?;
    let split = plain.len().checked_sub(SIGNATURE_LEN)?;
    let (body, sig) = plain.split_at(split);
    let signature = Signature(sig.try_into().ok()?);
    verify_sig(&sealed.from_pk, body, &signature).then(|| body.to_vec())
}

pub(crate) fn unseal_ack(network_sk: &SecretKey, sealed: &Sealed, address_width: usize) -> Option<Ack> {
    if sealed.kind != SealedKind::Ack {
        return None;
    }
    let body = unseal_bytes(network_sk, sealed, address_width)?;
    let ack = decode_ack(&body)?;
    (ack.party == sealed.from).then_some(ack)
}

pub(crate) fn unseal_input(
    network_sk: &SecretKey,
    sealed: &Sealed,
    address_width: usize,
) -> Option<InputSubmission> {
    if sealed.kind != SealedKind::Input {
        return None;
    }
    let body = unseal_bytes(network_sk, sealed, address_width)?;
    let input = decode_input(&body)?;
    (input.party == sealed.from).then_some(input)
}

/// Minimal reader for the two sealed body layouts.
struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        if self.buf.len() < n {
            return None;
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Some(head)
    }

    fn bytes(&mut self) -> Option<&'a [u8]> {
        let len = u32::from_be_bytes(self.take(4)?.try_into().ok()?) as usize;
        self.take(len)
    }

    fn digest(&mut self) -> Option<Digest> {
        Some(Digest(self.bytes()?.try_into().ok()?))
    }

    fn expect_str(&mut self, s: &str) -> Option<()> {
        (self.bytes()? == s.as_bytes()).then_some(())
    }
}

fn decode_ack(body: &[u8]) -> Option<Ack> {
    let mut r = Reader { buf: body };
    r.expect_str("decloak/ack")?;
    let id_p = r.digest()?;
    let party = Address::from_bytes(r.bytes()?.to_vec());
    let join = match r.take(1)? {
        [0] => false,
        [1] => true,
        _ => return None,
    };
    r.buf.is_empty().then_some(Ack { id_p, party, join })
}

fn decode_input(body: &[u8]) -> Option<InputSubmission> {
    let mut r = Reader { buf: body };
    r.expect_str("decloak/input")?;
    let id_p = r.digest()?;
    let party = Address::from_bytes(r.bytes()?.to_vec());
    let x = Value::from_bytes(r.bytes()?)?;
    let k_x = SymmetricKey::from_slice(r.bytes()?).ok()?;
    let pledge = r.digest()?;
    r.buf.is_empty().then_some(InputSubmission { id_p, party, x, k_x, pledge })
}

/// A payload signed by the enclave network key.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSigned<T> {
    pub body: T,
    pub signature: Signature,
}

impl<T: Canonical> NetworkSigned<T> {
    pub(crate) fn new(network_sk: &SecretKey, body: T) -> Self {
        let signature = sign(network_sk, &body.to_canonical_bytes());
        NetworkSigned { body, signature }
    }

    pub fn verify(&self, network_pk: &PublicKey) -> bool {
        verify_sig(network_pk, &self.body.to_canonical_bytes(), &self.signature)
    }
}

impl<T: Canonical> Canonical for NetworkSigned<T> {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.body).put(&self.signature);
    }
}

/// `(id_p, p)` as broadcast by the specified enclave.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Announcement {
    pub id_p: Digest,
    pub proposal: Proposal,
}

impl Canonical for Announcement {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str("decloak/announce").put(&self.id_p).put(&self.proposal);
    }
}

/// `(id_p, p')` after a successful negotiation.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Settlement {
    pub settled: SettledProposal,
}

impl Canonical for Settlement {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str("decloak/settle").put(&self.settled);
    }
}
