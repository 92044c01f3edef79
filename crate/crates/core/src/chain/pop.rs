use serde::{Deserialize, Serialize};

use super::block::{Block, BlockHeader, Receipt};
use super::tx::Transaction;
use crate::crypto::Digest;

/// A trusted block reference the verifier already holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub height: u64,
    pub digest: Digest,
}

/// Proof of publication: headers linking a checkpoint to the block that includes the target
/// transaction, followed by that block and its successors.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoP {
    pub link: Vec<BlockHeader>,
    pub blocks: Vec<Block>,
    pub target_tx_id: Digest,
}

impl PoP {
    pub fn inclusion_height(&self) -> Option<u64> {
        self.blocks.first().map(Block::height)
    }

    pub fn tip_height(&self) -> Option<u64> {
        self.blocks.last().map(Block::height)
    }

    /// Highest height that is final within this proof.
    pub fn confirmed_height(&self, finality_depth: u64) -> Option<u64> {
        let tip = self.tip_height()?;
        (tip + 1).checked_sub(finality_depth)
    }

    /// The confirmed block with the greatest height, usable as the next checkpoint.
    pub fn last_confirmed(&self, finality_depth: u64) -> Option<Checkpoint> {
        let h = self.confirmed_height(finality_depth)?;
        self.header_at(h).map(|hd| Checkpoint { height: hd.height, digest: hd.digest })
    }

    pub fn header_at(&self, height: u64) -> Option<&BlockHeader> {
        self.link
            .iter()
            .chain(self.blocks.iter().map(|b| &b.header))
            .find(|h| h.height == height)
    }

    pub fn target_receipt(&self) -> Option<&Receipt> {
        let first = self.blocks.first()?;
        first.position(&self.target_tx_id).map(|i| &first.receipts[i])
    }

    /// Every included transaction with its receipt and block height, in chain order.
    pub fn entries(&self) -> impl Iterator<Item = (u64, &Transaction, &Receipt)> {
        self.blocks.iter().flat_map(|b| b.entries().map(move |(t, r)| (b.height(), t, r)))
    }
}

/// True iff `pop` hangs off `checkpoint`, is hash-consistent, starts with the block that
/// includes `tx` and carries at least `finality_depth` full blocks.
pub fn verify_pop(checkpoint: &Checkpoint, pop: &PoP, tx: &Transaction, finality_depth: u64) -> bool {
    if tx.id() != pop.target_tx_id || (pop.blocks.len() as u64) < finality_depth.max(1) {
        return false;
    }
    let mut prev = *checkpoint;
    for header in pop.link.iter().chain(pop.blocks.iter().map(|b| &b.header)) {
        if header.height != prev.height + 1
            || header.parent_digest != prev.digest
            || !header.is_self_consistent()
        {
            return false;
        }
        prev = Checkpoint { height: header.height, digest: header.digest };
    }
    if !pop.blocks.iter().all(Block::is_self_consistent) {
        return false;
    }
    match pop.blocks[0].position(&pop.target_tx_id) {
        Some(i) => pop.blocks[0].txs[i] == *tx,
        None => false,
    }
}
