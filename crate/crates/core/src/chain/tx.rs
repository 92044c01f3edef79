use serde::{Deserialize, Serialize};

use crate::crypto::{
    hash, sign, verify_sig, Account, Address, Canonical, Ciphertext, Commitment, Digest, Encoder,
    PublicKey, Signature,
};
use crate::protocol::{Proof, ProofAux, Proposal};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TxKind {
    Register,
    Deposit,
    ChaT,
    Ack,
    FNeg,
    ChaP,
    ResP,
    PnsP,
    Cmt,
    Com,
    PnsT,
}

impl TxKind {
    pub const ALL: [TxKind; 11] = [
        TxKind::Register,
        TxKind::Deposit,
        TxKind::ChaT,
        TxKind::Ack,
        TxKind::FNeg,
        TxKind::ChaP,
        TxKind::ResP,
        TxKind::PnsP,
        TxKind::Cmt,
        TxKind::Com,
        TxKind::PnsT,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TxKind::Register => "register",
            TxKind::Deposit => "deposit",
            TxKind::ChaT => "chaT",
            TxKind::Ack => "ack",
            TxKind::FNeg => "fneg",
            TxKind::ChaP => "chaP",
            TxKind::ResP => "resP",
            TxKind::PnsP => "pnsP",
            TxKind::Cmt => "cmt",
            TxKind::Com => "com",
            TxKind::PnsT => "pnsT",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        TxKind::ALL.into_iter().find(|k| k.as_str() == s)
    }

    /// Name of the contract function the transaction calls.
    pub fn function(self) -> &'static str {
        match self {
            TxKind::Register => "register",
            TxKind::Deposit => "deposit",
            TxKind::ChaT => "challengeTEE",
            TxKind::Ack => "acknowledge",
            TxKind::FNeg => "failNegotiation",
            TxKind::ChaP => "challengeParties",
            TxKind::ResP => "partyResponse",
            TxKind::PnsP => "punishParties",
            TxKind::Cmt => "commit",
            TxKind::Com => "complete",
            TxKind::PnsT => "punishTEE",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "call", rename_all = "snake_case")]
pub enum TxPayload {
    Register {
        pk: PublicKey,
    },
    Deposit {
        amount: u64,
    },
    ChallengeTee {
        proposal: Proposal,
    },
    Acknowledge {
        id_p: Digest,
        ack: Ciphertext,
    },
    FailNegotiation {
        id_p: Digest,
    },
    ChallengeParties {
        id_p: Digest,
        suspicious: Vec<Address>,
    },
    PartyResponse {
        id_p: Digest,
        response: Ciphertext,
    },
    PunishParties {
        id_p: Digest,
        guilty: Vec<Address>,
    },
    Commit {
        proposal: Proposal,
        proof: Proof,
        aux: ProofAux,
        /// `c*_s'`, key slots stripped, in party order.
        new_states: Vec<Commitment>,
        /// `c*_r`, key slots stripped, in party order.
        returns: Vec<Commitment>,
        e_k: Ciphertext,
    },
    Complete {
        id_p: Digest,
        state_keys: Vec<Ciphertext>,
        return_keys: Vec<Ciphertext>,
    },
    PunishTee {
        id_p: Digest,
    },
}

impl TxPayload {
    pub fn kind(&self) -> TxKind {
        match self {
            TxPayload::Register { .. } => TxKind::Register,
            TxPayload::Deposit { .. } => TxKind::Deposit,
            TxPayload::ChallengeTee { .. } => TxKind::ChaT,
            TxPayload::Acknowledge { .. } => TxKind::Ack,
            TxPayload::FailNegotiation { .. } => TxKind::FNeg,
            TxPayload::ChallengeParties { .. } => TxKind::ChaP,
            TxPayload::PartyResponse { .. } => TxKind::ResP,
            TxPayload::PunishParties { .. } => TxKind::PnsP,
            TxPayload::Commit { .. } => TxKind::Cmt,
            TxPayload::Complete { .. } => TxKind::Com,
            TxPayload::PunishTee { .. } => TxKind::PnsT,
        }
    }

    /// The proposal the call refers to, if any.
    pub fn proposal_id(&self) -> Option<Digest> {
        match self {
            TxPayload::Register { .. } | TxPayload::Deposit { .. } => None,
            TxPayload::ChallengeTee { proposal } | TxPayload::Commit { proposal, .. } => {
                Some(proposal.id())
            }
            TxPayload::Acknowledge { id_p, .. }
            | TxPayload::FailNegotiation { id_p }
            | TxPayload::ChallengeParties { id_p, .. }
            | TxPayload::PartyResponse { id_p, .. }
            | TxPayload::PunishParties { id_p, .. }
            | TxPayload::Complete { id_p, .. }
            | TxPayload::PunishTee { id_p } => Some(*id_p),
        }
    }
}

impl Canonical for TxPayload {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_u8(self.kind().tag());
        match self {
            TxPayload::Register { pk } => {
                enc.put(pk);
            }
            TxPayload::Deposit { amount } => {
                enc.put_u64(*amount);
            }
            TxPayload::ChallengeTee { proposal } => {
                enc.put(proposal);
            }
            TxPayload::Acknowledge { id_p, ack } => {
                enc.put(id_p).put(ack);
            }
            TxPayload::FailNegotiation { id_p } | TxPayload::PunishTee { id_p } => {
                enc.put(id_p);
            }
            TxPayload::ChallengeParties { id_p, suspicious } => {
                enc.put(id_p).put_seq(suspicious);
            }
            TxPayload::PartyResponse { id_p, response } => {
                enc.put(id_p).put(response);
            }
            TxPayload::PunishParties { id_p, guilty } => {
                enc.put(id_p).put_seq(guilty);
            }
            TxPayload::Commit { proposal, proof, aux, new_states, returns, e_k } => {
                enc.put(proposal)
                    .put(proof)
                    .put(aux)
                    .put_seq(new_states)
                    .put_seq(returns)
                    .put(e_k);
            }
            TxPayload::Complete { id_p, state_keys, return_keys } => {
                enc.put(id_p).put_seq(state_keys).put_seq(return_keys);
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub sender: Address,
    pub sender_pk: PublicKey,
    pub payload: TxPayload,
    pub signature: Signature,
}

fn signing_bytes(sender: &Address, sender_pk: &PublicKey, payload: &TxPayload) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_str("decloak/tx").put(sender).put(sender_pk).put(payload);
    enc.finish()
}

impl Transaction {
    pub fn new(account: &Account, payload: TxPayload) -> Self {
        let signature = sign(&account.sk, &signing_bytes(&account.ad, &account.pk, &payload));
        Transaction { sender: account.ad.clone(), sender_pk: account.pk, payload, signature }
    }

    pub fn kind(&self) -> TxKind {
        self.payload.kind()
    }

    pub fn id(&self) -> Digest {
        hash(self)
    }

    /// The sender address must be derived from the attached key and the signature must verify.
    pub fn verify_signature(&self, address_width: usize) -> bool {
        self.sender_pk.address(address_width) == self.sender
            && verify_sig(
                &self.sender_pk,
                &signing_bytes(&self.sender, &self.sender_pk, &self.payload),
                &self.signature,
            )
    }
}

impl Canonical for Transaction {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.sender).put(&self.sender_pk).put(&self.payload).put(&self.signature);
    }
}
