//! `PoP_s`: proof that a commitment array is the confirmed state of a namespace.

use serde::{Deserialize, Serialize};

use crate::chain::{verify_header_chain, BlockHeader, Chain, Checkpoint};
use crate::contract::{commitments_digest, Contract};
use crate::crypto::Commitment;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub namespace: String,
    pub commitments: Vec<Commitment>,
    /// Headers from the checkpoint's successor to the tip.
    pub headers: Vec<BlockHeader>,
}

impl StateSnapshot {
    /// Returns the confirmed block the array is proven against, or `None`.
    pub fn verify(&self, checkpoint: &Checkpoint, finality_depth: u64) -> Option<Checkpoint> {
        let k = finality_depth.max(1) as usize;
        if self.headers.len() < k || !verify_header_chain(checkpoint, &self.headers) {
            return None;
        }
        let confirmed = &self.headers[self.headers.len() - k];
        if self.commitments.iter().any(|c| c.key_ct.is_none()) {
            return None;
        }
        let digest = confirmed.state_digest(&self.namespace)?;
        (digest == commitments_digest(&self.commitments))
            .then_some(Checkpoint { height: confirmed.height, digest: confirmed.digest })
    }
}

/// Host-side construction. Only possible while the namespace has not changed since the
/// last confirmed block, because the contract keeps current state only.
pub fn build_snapshot(
    chain: &Chain<Contract>,
    namespace: &str,
    checkpoint_height: u64,
) -> Option<StateSnapshot> {
    let confirmed = chain.confirmed_height();
    if checkpoint_height >= confirmed {
        return None;
    }
    let current = chain.executor().state_digest(namespace)?;
    if chain.block(confirmed)?.header.state_digest(namespace)? != current {
        return None;
    }
    Some(StateSnapshot {
        namespace: namespace.to_string(),
        commitments: chain.executor().commitments(namespace),
        headers: chain.headers(checkpoint_height, chain.height()).ok()?,
    })
}
