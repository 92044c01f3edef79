//! The on-chain verifier: proposal lifecycle, coin ledger, punishments and the
//! state-commitment registry. Runs as the chain's transaction executor.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::chain::{StateDigest, Transaction, TxExecutor, TxPayload};
use crate::crypto::{attach_key_slot, hash, Address, Ciphertext, Commitment, Digest, PublicKey};
use crate::protocol::{Proof, ProofAux, Proposal, ProposalStatus};

pub const DEFAULT_TAU_RESP: u64 = 10;

/// Where punished collateral goes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PunishmentSink {
    #[default]
    Burn,
    Treasury(Address),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContractConfig {
    /// Registered enclave list; the first entry is the specified enclave.
    pub tees: Vec<Address>,
    pub tau_resp: u64,
    pub sink: PunishmentSink,
    /// Known MPT functions and the registry namespace each one updates.
    pub functions: BTreeMap<Digest, String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredOutput {
    pub proof: Proof,
    pub aux: ProofAux,
    pub new_states: Vec<Commitment>,
    pub returns: Vec<Commitment>,
    pub e_k: Ciphertext,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub id_p: Digest,
    pub q: u64,
    pub h_neg: u64,
    pub tau_com: u64,
    pub tee: Address,
    pub sta: ProposalStatus,
    pub locked: bool,
    pub namespace: String,
    pub output: Option<StoredOutput>,
    pub challenged: Vec<Address>,
    pub punished: Vec<Address>,
}

impl ProposalRecord {
    pub fn completion_deadline(&self) -> u64 {
        self.h_neg + self.tau_com
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
struct Namespace {
    entries: BTreeMap<Address, Commitment>,
    digest: Digest,
    locked_by: Option<Digest>,
}

/// Digest of a full commitment array, ordered by owner.
pub fn commitments_digest(array: &[Commitment]) -> Digest {
    hash(&array.to_vec())
}

impl Namespace {
    fn array(&self) -> Vec<Commitment> {
        self.entries.values().cloned().collect()
    }

    fn recompute(&mut self) {
        self.digest = commitments_digest(&self.array());
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ContractError {
    #[error("sender is not registered")]
    NotRegistered,
    #[error("already registered")]
    AlreadyRegistered,
    #[error("registered key does not belong to the sender")]
    KeyMismatch,
    #[error("deposit must be positive")]
    ZeroDeposit,
    #[error("balance overflow")]
    Overflow,
    #[error("unknown MPT function")]
    UnknownFunction,
    #[error("proposal already exists")]
    ProposalExists,
    #[error("unknown proposal")]
    UnknownProposal,
    #[error("deadline passed")]
    TooLate,
    #[error("too early")]
    TooEarly,
    #[error("caller is not the specified enclave")]
    NotSpecifiedTee,
    #[error("caller is not a registered enclave")]
    NotTee,
    #[error("proposal is not in PROPOSED state")]
    WrongStatus,
    #[error("empty party list")]
    EmptyList,
    #[error("an output is already committed for this proposal")]
    AlreadyCommitted,
    #[error("no committed output")]
    NothingCommitted,
    #[error("states are locked by another proposal")]
    Locked,
    #[error("proof does not match the current state digest")]
    StaleProof,
    #[error("malformed output: {0}")]
    Malformed(&'static str),
}

#[derive(Clone, Debug)]
pub struct Contract {
    config: ContractConfig,
    coins: BTreeMap<Address, u64>,
    pks: BTreeMap<Address, PublicKey>,
    proposals: BTreeMap<Digest, ProposalRecord>,
    registry: BTreeMap<String, Namespace>,
    burned: u64,
}

impl Contract {
    pub fn new(config: ContractConfig) -> Self {
        let mut registry = BTreeMap::new();
        for ns in config.functions.values() {
            let mut n = Namespace::default();
            n.recompute();
            registry.insert(ns.clone(), n);
        }
        Contract {
            config,
            coins: BTreeMap::new(),
            pks: BTreeMap::new(),
            proposals: BTreeMap::new(),
            registry,
            burned: 0,
        }
    }

    /// Deployment-time state, e.g. balances of an application that predates the run.
    pub fn install_state(&mut self, namespace: &str, c: Commitment) {
        let ns = self.registry.entry(namespace.to_string()).or_default();
        ns.entries.insert(c.owner.clone(), c);
        ns.recompute();
    }

    pub fn config(&self) -> &ContractConfig {
        &self.config
    }

    pub fn tees(&self) -> &[Address] {
        &self.config.tees
    }

    pub fn balance(&self, a: &Address) -> u64 {
        self.coins.get(a).copied().unwrap_or(0)
    }

    pub fn balances(&self) -> &BTreeMap<Address, u64> {
        &self.coins
    }

    pub fn public_key(&self, a: &Address) -> Option<&PublicKey> {
        self.pks.get(a)
    }

    pub fn is_registered(&self, a: &Address) -> bool {
        self.pks.contains_key(a)
    }

    pub fn record(&self, id_p: &Digest) -> Option<&ProposalRecord> {
        self.proposals.get(id_p)
    }

    pub fn records(&self) -> impl Iterator<Item = &ProposalRecord> {
        self.proposals.values()
    }

    pub fn namespace_of(&self, f_hash: &Digest) -> Option<&str> {
        self.config.functions.get(f_hash).map(String::as_str)
    }

    pub fn commitments(&self, namespace: &str) -> Vec<Commitment> {
        self.registry.get(namespace).map(Namespace::array).unwrap_or_default()
    }

    pub fn state_digest(&self, namespace: &str) -> Option<Digest> {
        self.registry.get(namespace).map(|n| n.digest)
    }

    pub fn locked_by(&self, namespace: &str) -> Option<Digest> {
        self.registry.get(namespace).and_then(|n| n.locked_by)
    }

    pub fn burned(&self) -> u64 {
        self.burned
    }

    pub fn total_supply(&self) -> u64 {
        self.coins.values().sum()
    }

    fn existing(&self, id_p: &Digest) -> Result<&ProposalRecord, ContractError> {
        self.proposals.get(id_p).ok_or(ContractError::UnknownProposal)
    }

    fn open_for_tee(&self, id_p: &Digest, sender: &Address) -> Result<&ProposalRecord, ContractError> {
        let r = self.existing(id_p)?;
        if &r.tee != sender {
            return Err(ContractError::NotSpecifiedTee);
        }
        if r.sta != ProposalStatus::Proposed {
            return Err(ContractError::WrongStatus);
        }
        Ok(r)
    }

    fn new_record(&self, p: &Proposal) -> Result<ProposalRecord, ContractError> {
        let namespace = self.namespace_of(&p.f_hash).ok_or(ContractError::UnknownFunction)?;
        let tee = self.config.tees.first().ok_or(ContractError::NotTee)?;
        Ok(ProposalRecord {
            id_p: p.id(),
            q: p.q,
            h_neg: p.h_neg,
            tau_com: p.tau_com,
            tee: tee.clone(),
            sta: ProposalStatus::Proposed,
            locked: false,
            namespace: namespace.to_string(),
            output: None,
            challenged: Vec::new(),
            punished: Vec::new(),
        })
    }

    fn punish(&mut self, who: &Address, q: u64) {
        let bal = self.coins.entry(who.clone()).or_insert(0);
        let taken = q.min(*bal);
        *bal -= taken;
        match &self.config.sink {
            PunishmentSink::Burn => self.burned += taken,
            PunishmentSink::Treasury(t) => *self.coins.entry(t.clone()).or_insert(0) += taken,
        }
    }

    fn unlock(&mut self, id_p: &Digest) {
        if let Some(r) = self.proposals.get_mut(id_p) {
            r.locked = false;
            if let Some(ns) = self.registry.get_mut(&r.namespace) {
                if ns.locked_by == Some(*id_p) {
                    ns.locked_by = None;
                }
            }
        }
    }

    fn check_output(
        new_states: &[Commitment],
        returns: &[Commitment],
    ) -> Result<(), ContractError> {
        if new_states.is_empty() {
            return Err(ContractError::Malformed("no parties"));
        }
        if new_states.len() != returns.len() {
            return Err(ContractError::Malformed("state and return counts differ"));
        }
        let owners: BTreeSet<&Address> = new_states.iter().map(|c| &c.owner).collect();
        if owners.len() != new_states.len() {
            return Err(ContractError::Malformed("duplicate owner"));
        }
        if new_states.iter().zip(returns).any(|(s, r)| s.owner != r.owner) {
            return Err(ContractError::Malformed("return owners differ from state owners"));
        }
        if new_states.iter().chain(returns).any(|c| c.key_ct.is_some()) {
            return Err(ContractError::Malformed("key slot present"));
        }
        Ok(())
    }

    pub fn apply(&mut self, tx: &Transaction, height: u64) -> Result<(), ContractError> {
        let sender = &tx.sender;
        match &tx.payload {
            TxPayload::Register { pk } => {
                if *pk != tx.sender_pk {
                    return Err(ContractError::KeyMismatch);
                }
                if self.pks.contains_key(sender) {
                    return Err(ContractError::AlreadyRegistered);
                }
                self.pks.insert(sender.clone(), *pk);
                self.coins.entry(sender.clone()).or_insert(0);
            }
            TxPayload::Deposit { amount } => {
                if !self.is_registered(sender) {
                    return Err(ContractError::NotRegistered);
                }
                if *amount == 0 {
                    return Err(ContractError::ZeroDeposit);
                }
                let bal = self.coins.entry(sender.clone()).or_insert(0);
                *bal = bal.checked_add(*amount).ok_or(ContractError::Overflow)?;
            }
            TxPayload::ChallengeTee { proposal } => {
                if !self.is_registered(sender) {
                    return Err(ContractError::NotRegistered);
                }
                let id_p = proposal.id();
                if self.proposals.contains_key(&id_p) {
                    return Err(ContractError::ProposalExists);
                }
                let r = self.new_record(proposal)?;
                self.proposals.insert(id_p, r);
            }
            TxPayload::Acknowledge { id_p, .. } => {
                if height >= self.existing(id_p)?.h_neg {
                    return Err(ContractError::TooLate);
                }
            }
            TxPayload::FailNegotiation { id_p } => {
                if self.open_for_tee(id_p, sender)?.output.is_some() {
                    return Err(ContractError::AlreadyCommitted);
                }
                self.proposals.get_mut(id_p).unwrap().sta = ProposalStatus::NegoFailed;
            }
            TxPayload::ChallengeParties { id_p, suspicious } => {
                self.open_for_tee(id_p, sender)?;
                if suspicious.is_empty() {
                    return Err(ContractError::EmptyList);
                }
                self.proposals.get_mut(id_p).unwrap().challenged = suspicious.clone();
            }
            TxPayload::PartyResponse { id_p, .. } => {
                if height >= self.existing(id_p)?.h_neg + self.config.tau_resp {
                    return Err(ContractError::TooLate);
                }
            }
            TxPayload::PunishParties { id_p, guilty } => {
                let r = self.open_for_tee(id_p, sender)?;
                if r.output.is_some() {
                    return Err(ContractError::AlreadyCommitted);
                }
                let guilty: BTreeSet<Address> = guilty.iter().cloned().collect();
                if guilty.is_empty() {
                    return Err(ContractError::EmptyList);
                }
                let q = r.q;
                for g in &guilty {
                    self.punish(g, q);
                }
                let r = self.proposals.get_mut(id_p).unwrap();
                r.punished = guilty.into_iter().collect();
                r.sta = ProposalStatus::Aborted;
            }
            TxPayload::Commit { proposal, proof, aux, new_states, returns, e_k } => {
                let id_p = proposal.id();
                let record = match self.proposals.get(&id_p) {
                    Some(r) => r.clone(),
                    None => self.new_record(proposal)?,
                };
                if &record.tee != sender {
                    return Err(ContractError::NotSpecifiedTee);
                }
                if record.sta != ProposalStatus::Proposed {
                    return Err(ContractError::WrongStatus);
                }
                if record.output.is_some() {
                    return Err(ContractError::AlreadyCommitted);
                }
                if aux.f_hash != proposal.f_hash || aux.p_hash != proposal.p_hash {
                    return Err(ContractError::Malformed("metadata does not match proposal"));
                }
                Self::check_output(new_states, returns)?;
                let ns = self.registry.get(&record.namespace).ok_or(ContractError::UnknownFunction)?;
                if ns.locked_by.is_some() {
                    return Err(ContractError::Locked);
                }
                if proof.old_digest != ns.digest {
                    return Err(ContractError::StaleProof);
                }
                let ns = self.registry.get_mut(&record.namespace).unwrap();
                ns.locked_by = Some(id_p);
                let mut record = record;
                record.locked = true;
                record.output = Some(StoredOutput {
                    proof: *proof,
                    aux: *aux,
                    new_states: new_states.clone(),
                    returns: returns.clone(),
                    e_k: e_k.clone(),
                });
                self.proposals.insert(id_p, record);
            }
            TxPayload::Complete { id_p, state_keys, return_keys } => {
                if !self.config.tees.contains(sender) {
                    return Err(ContractError::NotTee);
                }
                let r = self.existing(id_p)?;
                if r.sta != ProposalStatus::Proposed {
                    return Err(ContractError::WrongStatus);
                }
                let out = r.output.as_ref().ok_or(ContractError::NothingCommitted)?;
                if state_keys.len() != out.new_states.len() || return_keys.len() != out.returns.len() {
                    return Err(ContractError::Malformed("key count"));
                }
                let full_states: Vec<Commitment> = out
                    .new_states
                    .iter()
                    .zip(state_keys)
                    .map(|(c, k)| attach_key_slot(c, k.clone()))
                    .collect();
                let full_returns: Vec<Commitment> = out
                    .returns
                    .iter()
                    .zip(return_keys)
                    .map(|(c, k)| attach_key_slot(c, k.clone()))
                    .collect();
                let ns = &self.registry[&r.namespace];
                let mut next = ns.clone();
                for c in &full_states {
                    next.entries.insert(c.owner.clone(), c.clone());
                }
                if commitments_digest(&next.array()) != out.proof.new_digest {
                    return Err(ContractError::Malformed("completed states do not match proof"));
                }
                next.digest = out.proof.new_digest;
                next.locked_by = None;
                let ns_name = r.namespace.clone();
                self.registry.insert(ns_name, next);
                let r = self.proposals.get_mut(id_p).unwrap();
                let out = r.output.as_mut().unwrap();
                out.new_states = full_states;
                out.returns = full_returns;
                r.locked = false;
                r.sta = ProposalStatus::Completed;
            }
            TxPayload::PunishTee { id_p } => {
                let r = self.existing(id_p)?;
                if height <= r.completion_deadline() {
                    return Err(ContractError::TooEarly);
                }
                if r.sta != ProposalStatus::Proposed {
                    return Err(ContractError::WrongStatus);
                }
                let (tee, q) = (r.tee.clone(), r.q);
                self.punish(&tee, q);
                self.unlock(id_p);
                let r = self.proposals.get_mut(id_p).unwrap();
                r.punished = vec![tee];
                r.sta = ProposalStatus::Aborted;
            }
        }
        Ok(())
    }
}

impl TxExecutor for Contract {
    fn execute(&mut self, tx: &Transaction, height: u64) -> Result<(), String> {
        self.apply(tx, height).map_err(|e| e.to_string())
    }

    fn state_digests(&self) -> Vec<StateDigest> {
        self.registry
            .iter()
            .map(|(ns, n)| StateDigest { namespace: ns.clone(), digest: n.digest })
            .collect()
    }
}
