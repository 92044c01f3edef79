use serde::{Deserialize, Serialize};

use super::tx::Transaction;
use crate::crypto::{hash_bytes, Canonical, Digest, Encoder};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Receipt {
    pub tx_id: Digest,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

impl Canonical for Receipt {
    fn encode(&self, enc: &mut Encoder) {
        enc.put(&self.tx_id)
            .put_bool(self.ok)
            .put_str(self.reason.as_deref().unwrap_or(""));
    }
}

/// Digest of one application's committed state array after a block.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateDigest {
    pub namespace: String,
    pub digest: Digest,
}

impl Canonical for StateDigest {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(&self.namespace).put(&self.digest);
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockHeader {
    pub height: u64,
    pub parent_digest: Digest,
    pub body_digest: Digest,
    pub states: Vec<StateDigest>,
    pub digest: Digest,
}

impl BlockHeader {
    pub fn compute_digest(&self) -> Digest {
        let mut enc = Encoder::new();
        enc.put_str("decloak/block")
            .put_u64(self.height)
            .put(&self.parent_digest)
            .put(&self.body_digest)
            .put_seq(&self.states);
        hash_bytes(&enc.finish())
    }

    pub fn state_digest(&self, namespace: &str) -> Option<Digest> {
        self.states.iter().find(|s| s.namespace == namespace).map(|s| s.digest)
    }

    pub fn is_self_consistent(&self) -> bool {
        self.digest == self.compute_digest()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub header: BlockHeader,
    pub txs: Vec<Transaction>,
    pub receipts: Vec<Receipt>,
}

pub(crate) fn body_digest(txs: &[Transaction], receipts: &[Receipt]) -> Digest {
    let mut enc = Encoder::new();
    enc.put_seq(txs).put_seq(receipts);
    hash_bytes(&enc.finish())
}

impl Block {
    pub fn new(
        height: u64,
        parent_digest: Digest,
        txs: Vec<Transaction>,
        receipts: Vec<Receipt>,
        states: Vec<StateDigest>,
    ) -> Self {
        let mut header = BlockHeader {
            height,
            parent_digest,
            body_digest: body_digest(&txs, &receipts),
            states,
            digest: Digest::ZERO,
        };
        header.digest = header.compute_digest();
        Block { header, txs, receipts }
    }

    pub fn height(&self) -> u64 {
        self.header.height
    }

    pub fn digest(&self) -> Digest {
        self.header.digest
    }

    /// Header and body agree and the header digest is correct.
    pub fn is_self_consistent(&self) -> bool {
        self.txs.len() == self.receipts.len()
            && self.txs.iter().zip(&self.receipts).all(|(t, r)| t.id() == r.tx_id)
            && self.header.body_digest == body_digest(&self.txs, &self.receipts)
            && self.header.is_self_consistent()
    }

    pub fn position(&self, tx_id: &Digest) -> Option<usize> {
        self.receipts.iter().position(|r| &r.tx_id == tx_id)
    }

    pub fn entries(&self) -> impl Iterator<Item = (&Transaction, &Receipt)> {
        self.txs.iter().zip(&self.receipts)
    }
}
