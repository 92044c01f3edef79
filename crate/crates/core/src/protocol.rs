//! Types shared by the contract, the enclave and the actors.

use serde::{Deserialize, Serialize};

use crate::crypto::{hash, Address, Canonical, Digest, Encoder};

/// An MPT proposal `p`. Its hash is the proposal id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proposal {
    pub f_hash: Digest,
    pub p_hash: Digest,
    /// Collateral per involved entity.
    pub q: u64,
    /// Negotiation deadline (block height).
    pub h_neg: u64,
    /// Window after `h_neg` after which a non-terminal proposal lets anyone punish the tee.
    pub tau_com: u64,
    /// Distinguishes otherwise identical proposals.
    pub nonce: u64,
}

impl Proposal {
    pub fn id(&self) -> Digest {
        hash(self)
    }

    pub fn response_deadline(&self, tau_resp: u64) -> u64 {
        self.h_neg + tau_resp
    }

    pub fn completion_deadline(&self) -> u64 {
        self.h_neg + self.tau_com
    }
}

impl Canonical for Proposal {
    fn encode(&self, enc: &mut Encoder) {
        // hashes inside a proposal are public identifiers
        enc.put(&self.f_hash)
            .put(&self.p_hash)
            .put_u64(self.q)
            .put_u64(self.h_neg)
            .put_u64(self.tau_com)
            .put_u64(self.nonce);
    }
}

/// `p'`: the proposal plus the settled party list, in slot order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettledProposal {
    pub id_p: Digest,
    pub proposal: Proposal,
    pub parties: Vec<Address>,
}

impl Canonical for SettledProposal {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.id_p).put(&self.proposal).put_seq(&self.parties);
    }
}

/// Old and new digests of the full state-commitment array of an application.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Proof {
    pub old_digest: Digest,
    pub new_digest: Digest,
}

impl Canonical for Proof {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.old_digest).put(&self.new_digest);
    }
}

/// Evaluation metadata `[H_P, H_F, H_cs]` carried next to the proof.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProofAux {
    pub p_hash: Digest,
    pub f_hash: Digest,
    /// Digest of the parties' old state commitments only.
    pub parties_cs_digest: Digest,
}

impl Canonical for ProofAux {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.p_hash).put(&self.f_hash).put(&self.parties_cs_digest);
    }
}

/// Contract-side proposal status.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ProposalStatus {
    Proposed,
    NegoFailed,
    Aborted,
    Completed,
}

impl ProposalStatus {
    pub fn is_terminal(self) -> bool {
        !matches!(self, ProposalStatus::Proposed)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ProposalStatus::Proposed => "PROPOSED",
            ProposalStatus::NegoFailed => "NEGOFAILED",
            ProposalStatus::Aborted => "ABORTED",
            ProposalStatus::Completed => "COMPLETED",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "PROPOSED" => ProposalStatus::Proposed,
            "NEGOFAILED" => ProposalStatus::NegoFailed,
            "ABORTED" => ProposalStatus::Aborted,
            "COMPLETED" => ProposalStatus::Completed,
            _ => return None,
        })
    }
}
