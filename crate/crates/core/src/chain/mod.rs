//! Forkless simulated ledger: ordering, heights, finality and proofs of publication.

mod block;
mod pop;
mod tx;

use std::collections::{HashMap, HashSet};

pub use block::{Block, BlockHeader, Receipt, StateDigest};
pub use pop::{verify_pop, Checkpoint, PoP};
pub use tx::{Transaction, TxKind, TxPayload};

use crate::crypto::{Digest, DEFAULT_ADDRESS_WIDTH};

pub const DEFAULT_FINALITY_DEPTH: u64 = 6;

/// Contract logic run for every mined transaction.
pub trait TxExecutor {
    /// `height` is the height of the block being built.
    fn execute(&mut self, tx: &Transaction, height: u64) -> Result<(), String>;
    fn state_digests(&self) -> Vec<StateDigest>;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ChainConfig {
    pub finality_depth: u64,
    pub address_width: usize,
}

impl Default for ChainConfig {
    fn default() -> Self {
        ChainConfig { finality_depth: DEFAULT_FINALITY_DEPTH, address_width: DEFAULT_ADDRESS_WIDTH }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SubmitOutcome {
    Accepted,
    BadSignature,
    Duplicate,
}

impl SubmitOutcome {
    pub fn accepted(self) -> bool {
        self == SubmitOutcome::Accepted
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ChainError {
    #[error("transaction {0} is not on chain")]
    UnknownTx(Digest),
    #[error("transaction {0} is not confirmed yet")]
    NotConfirmed(Digest),
    #[error("height {0} is out of range")]
    BadHeight(u64),
}

struct Pending {
    tick: u64,
    seq: u64,
    tx: Transaction,
}

pub struct Chain<E> {
    config: ChainConfig,
    blocks: Vec<Block>,
    pending: Vec<Pending>,
    seen: HashSet<Digest>,
    index: HashMap<Digest, (u64, usize)>,
    next_seq: u64,
    executor: E,
}

impl<E: TxExecutor> Chain<E> {
    pub fn new(executor: E, config: ChainConfig) -> Self {
        assert!(config.finality_depth >= 1, "finality depth must be at least 1");
        let genesis = Block::new(0, Digest::ZERO, Vec::new(), Vec::new(), executor.state_digests());
        Chain {
            config,
            blocks: vec![genesis],
            pending: Vec::new(),
            seen: HashSet::new(),
            index: HashMap::new(),
            next_seq: 0,
            executor,
        }
    }

    pub fn config(&self) -> ChainConfig {
        self.config
    }

    pub fn finality_depth(&self) -> u64 {
        self.config.finality_depth
    }

    pub fn executor(&self) -> &E {
        &self.executor
    }

    pub fn height(&self) -> u64 {
        self.blocks.len() as u64 - 1
    }

    pub fn tip(&self) -> &Block {
        self.blocks.last().expect("genesis always present")
    }

    pub fn block(&self, height: u64) -> Option<&Block> {
        self.blocks.get(height as usize)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    /// The public mempool.
    pub fn pending_txs(&self) -> impl Iterator<Item = &Transaction> {
        self.pending.iter().map(|p| &p.tx)
    }

    /// Heights up to this one are final.
    pub fn confirmed_height(&self) -> u64 {
        (self.height() + 1).saturating_sub(self.config.finality_depth)
    }

    pub fn checkpoint(&self, height: u64) -> Option<Checkpoint> {
        self.block(height).map(|b| Checkpoint { height, digest: b.digest() })
    }

    pub fn submit_tx(&mut self, tx: Transaction, tick: u64) -> SubmitOutcome {
        if !tx.verify_signature(self.config.address_width) {
            return SubmitOutcome::BadSignature;
        }
        if !self.seen.insert(tx.id()) {
            return SubmitOutcome::Duplicate;
        }
        self.pending.push(Pending { tick, seq: self.next_seq, tx });
        self.next_seq += 1;
        SubmitOutcome::Accepted
    }

    pub fn mine_block(&mut self) -> &Block {
        let height = self.height() + 1;
        let mut pending = std::mem::take(&mut self.pending);
        pending.sort_by(|a, b| {
            (a.tick, &a.tx.sender, a.seq).cmp(&(b.tick, &b.tx.sender, b.seq))
        });
        let mut txs = Vec::with_capacity(pending.len());
        let mut receipts = Vec::with_capacity(pending.len());
        for (i, p) in pending.into_iter().enumerate() {
            let tx_id = p.tx.id();
            let receipt = match self.executor.execute(&p.tx, height) {
                Ok(()) => Receipt { tx_id, ok: true, reason: None },
                Err(reason) => Receipt { tx_id, ok: false, reason: Some(reason) },
            };
            self.index.insert(tx_id, (height, i));
            txs.push(p.tx);
            receipts.push(receipt);
        }
        let block =
            Block::new(height, self.tip().digest(), txs, receipts, self.executor.state_digests());
        self.blocks.push(block);
        self.tip()
    }

    pub fn locate(&self, tx_id: &Digest) -> Option<(u64, &Transaction, &Receipt)> {
        let &(h, i) = self.index.get(tx_id)?;
        let b = &self.blocks[h as usize];
        Some((h, &b.txs[i], &b.receipts[i]))
    }

    pub fn is_confirmed(&self, tx_id: &Digest) -> bool {
        self.locate(tx_id).is_some_and(|(h, _, _)| h <= self.confirmed_height())
    }

    /// PoP of exactly `finality_depth` blocks, checkpointed at the block before inclusion.
    pub fn get_pop(&self, tx_id: &Digest) -> Result<PoP, ChainError> {
        let (h, _, _) = self.locate(tx_id).ok_or(ChainError::UnknownTx(*tx_id))?;
        self.pop_between(tx_id, h - 1, h + self.config.finality_depth - 1)
    }

    /// PoP linked to the checkpoint at `checkpoint_height` whose full blocks run from the
    /// inclusion block through `through` (extended to at least `finality_depth` blocks).
    pub fn pop_between(
        &self,
        tx_id: &Digest,
        checkpoint_height: u64,
        through: u64,
    ) -> Result<PoP, ChainError> {
        let (h, _, _) = self.locate(tx_id).ok_or(ChainError::UnknownTx(*tx_id))?;
        if checkpoint_height >= h {
            return Err(ChainError::BadHeight(checkpoint_height));
        }
        let last = through.max(h + self.config.finality_depth - 1);
        if last > self.height() {
            return Err(ChainError::NotConfirmed(*tx_id));
        }
        let link = self.blocks[(checkpoint_height + 1) as usize..h as usize]
            .iter()
            .map(|b| b.header.clone())
            .collect();
        let blocks = self.blocks[h as usize..=last as usize].to_vec();
        Ok(PoP { link, blocks, target_tx_id: *tx_id })
    }

    /// Headers from `from + 1` through `to`, for carrying a checkpoint forward.
    pub fn headers(&self, from: u64, to: u64) -> Result<Vec<BlockHeader>, ChainError> {
        if to > self.height() || from > to {
            return Err(ChainError::BadHeight(to));
        }
        Ok(self.blocks[(from + 1) as usize..=to as usize].iter().map(|b| b.header.clone()).collect())
    }
}

/// Check that `headers` extend `checkpoint` contiguously and hash-consistently.
pub fn verify_header_chain(checkpoint: &Checkpoint, headers: &[BlockHeader]) -> bool {
    let mut prev = *checkpoint;
    for h in headers {
        if h.height != prev.height + 1 || h.parent_digest != prev.digest || !h.is_self_consistent() {
            return false;
        }
        prev = Checkpoint { height: h.height, digest: h.digest };
    }
    true
}
