//! The enclave program. A host drives it only through the methods below and
//! sees only their return values; the network secret, collected inputs and
//! evaluation outputs never leave the struct.

mod eval;
mod messages;
mod snapshot;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::Serialize;

use crate::apps::{App, Value};
use crate::chain::{verify_pop, Checkpoint, PoP, Transaction, TxPayload};
use crate::crypto::{
    derive_shared, strip_key_slot, sym_decrypt, sym_encrypt, wrap_data_key, Account, Address,
    CryptoError, Digest, Encoder, KeyGenerator, PublicKey, SymmetricKey, KEY_LEN,
    PUBLIC_KEY_LEN,
};
use crate::protocol::{Proposal, SettledProposal};

pub use eval::{eval, parties_cs_digest, EvalError, EvalOutput};
pub use messages::{
    input_commitment, pledge_matches, seal_ack, seal_input, Ack, Announcement, InputSubmission,
    NetworkSigned, Sealed, SealedKind, Settlement,
};
pub use snapshot::{build_snapshot, StateSnapshot};

pub const DEFAULT_KAPPA: u32 = 256;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnclaveStatus {
    #[serde(rename = "NONE")]
    Empty,
    Negotiated,
    Executed,
    Completed,
}

impl EnclaveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EnclaveStatus::Empty => "NONE",
            EnclaveStatus::Negotiated => "NEGOTIATED",
            EnclaveStatus::Executed => "EXECUTED",
            EnclaveStatus::Completed => "COMPLETED",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EnclaveError {
    #[error("network key not provisioned")]
    NotProvisioned,
    #[error("this enclave is not the specified tee")]
    NotSpecified,
    #[error("unknown function or policy")]
    UnknownApp,
    #[error("unknown proposal")]
    UnknownProposal,
    #[error("operation not allowed in status {0:?}")]
    WrongStatus(EnclaveStatus),
    #[error("proposal already closed")]
    Closed,
    #[error("acks do not conform to the policy")]
    ConformFailed,
    #[error("insufficient cached coins for {0}")]
    InsufficientCoins(Address),
    #[error("negotiation can still succeed")]
    NegotiationPossible,
    #[error("proof of publication rejected")]
    BadPoP,
    #[error("transaction failed on chain")]
    TxFailed,
    #[error("wrong transaction")]
    WrongTx,
    #[error("proof does not reach the required height")]
    TooEarly,
    #[error("completion deadline reached")]
    TooLate,
    #[error("challenge left the parties no block to respond in")]
    ChallengeTooLate,
    #[error("state snapshot rejected")]
    BadSnapshot,
    #[error("empty challenge list")]
    EmptyChallenge,
    #[error("{0} is not a settled party")]
    NotParty(Address),
    #[error("malformed key bundle")]
    BadKeyBundle,
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Crypto(#[from] CryptoError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnclaveConfig {
    pub finality_depth: u64,
    pub address_width: usize,
    pub tau_resp: u64,
    pub kappa: u32,
    pub keygen_seed: u64,
}

impl Default for EnclaveConfig {
    fn default() -> Self {
        EnclaveConfig {
            finality_depth: crate::chain::ChainConfig::default().finality_depth,
            address_width: crate::crypto::DEFAULT_ADDRESS_WIDTH,
            tau_resp: crate::contract::DEFAULT_TAU_RESP,
            kappa: DEFAULT_KAPPA,
            keygen_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ExecuteOutcome {
    Executed,
    /// `P*_M`: settled parties without a valid input.
    Suspicious(Vec<Address>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PunishOutcome {
    /// Every challenged party answered; call `execute` again.
    Resume,
    Punish(Transaction),
}

struct Session {
    proposal: Proposal,
    status: EnclaveStatus,
    closed: bool,
    acks: BTreeMap<Address, bool>,
    settlement: Option<NetworkSigned<Settlement>>,
    deducted: Vec<Address>,
    inputs: BTreeMap<Address, InputSubmission>,
    pks: BTreeMap<Address, PublicKey>,
    challenged: Vec<Address>,
    output: Option<EvalOutput>,
    tx_cmt: Option<Transaction>,
    tx_com: Option<Transaction>,
}

impl Session {
    fn new(proposal: Proposal) -> Self {
        Session {
            proposal,
            status: EnclaveStatus::Empty,
            closed: false,
            acks: BTreeMap::new(),
            settlement: None,
            deducted: Vec::new(),
            inputs: BTreeMap::new(),
            pks: BTreeMap::new(),
            challenged: Vec::new(),
            output: None,
            tx_cmt: None,
            tx_com: None,
        }
    }

    fn parties(&self) -> &[Address] {
        self.settlement.as_ref().map(|s| s.body.settled.parties.as_slice()).unwrap_or(&[])
    }

    fn missing(&self) -> Vec<Address> {
        self.parties().iter().filter(|p| !self.inputs.contains_key(*p)).cloned().collect()
    }
}

pub struct Enclave {
    account: Account,
    network: Option<Account>,
    config: EnclaveConfig,
    tees: Vec<Address>,
    apps: BTreeMap<Digest, App>,
    checkpoints: Vec<Checkpoint>,
    cached_coins: BTreeMap<Address, u64>,
    keygen: KeyGenerator,
    sessions: BTreeMap<Digest, Session>,
}

impl fmt::Debug for Enclave {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Enclave")
            .field("address", &self.account.ad)
            .field("provisioned", &self.network.is_some())
            .field("sessions", &self.sessions.len())
            .finish_non_exhaustive()
    }
}

fn e_k_context(id_p: &Digest) -> Vec<u8> {
    let mut enc = Encoder::new();
    enc.put_str("decloak/e_k").put(id_p);
    enc.finish()
}

const BUNDLE_ENTRY: usize = 2 * KEY_LEN + PUBLIC_KEY_LEN;

impl Enclave {
    pub fn new(account: Account, config: EnclaveConfig) -> Result<Self, EnclaveError> {
        let keygen = KeyGenerator::new(config.keygen_seed, config.kappa)?;
        Ok(Enclave {
            account,
            network: None,
            config,
            tees: Vec::new(),
            apps: BTreeMap::new(),
            checkpoints: Vec::new(),
            cached_coins: BTreeMap::new(),
            keygen,
            sessions: BTreeMap::new(),
        })
    }

    // ---- setup ----

    /// Copies the shared network account into this enclave. Attestation is assumed.
    pub fn provision_network(&mut self, network: Account) {
        self.network = Some(network);
    }

    pub fn set_tees(&mut self, tees: Vec<Address>) {
        self.tees = tees;
    }

    pub fn install_app(&mut self, app: App) {
        self.apps.insert(app.f_hash(), app);
    }

    pub fn trust_checkpoint(&mut self, checkpoint: Checkpoint) {
        if !self.checkpoints.contains(&checkpoint) {
            self.checkpoints.push(checkpoint);
        }
    }

    pub fn sync_coins(&mut self, balances: BTreeMap<Address, u64>) {
        self.cached_coins = balances;
    }

    // ---- public views ----

    pub fn address(&self) -> &Address {
        &self.account.ad
    }

    pub fn public_key(&self) -> PublicKey {
        self.account.pk
    }

    pub fn network_public_key(&self) -> Option<PublicKey> {
        self.network.as_ref().map(|n| n.pk)
    }

    pub fn is_specified(&self) -> bool {
        self.tees.first() == Some(&self.account.ad)
    }

    pub fn checkpoints(&self) -> &[Checkpoint] {
        &self.checkpoints
    }

    pub fn status(&self, id_p: &Digest) -> EnclaveStatus {
        self.sessions.get(id_p).map_or(EnclaveStatus::Empty, |s| s.status)
    }

    pub fn cached_coins(&self, who: &Address) -> u64 {
        self.cached_coins.get(who).copied().unwrap_or(0)
    }

    // ---- helpers ----

    fn net(&self) -> Result<&Account, EnclaveError> {
        self.network.as_ref().ok_or(EnclaveError::NotProvisioned)
    }

    fn require_specified(&self) -> Result<(), EnclaveError> {
        self.net()?;
        if self.is_specified() {
            Ok(())
        } else {
            Err(EnclaveError::NotSpecified)
        }
    }

    fn app_for(&self, p: &Proposal) -> Result<&App, EnclaveError> {
        lookup_app(&self.apps, p)
    }

    fn check_pop(&self, tx: &Transaction, pop: &PoP) -> Result<(), EnclaveError> {
        let k = self.config.finality_depth;
        if !self.checkpoints.iter().any(|cp| verify_pop(cp, pop, tx, k)) {
            return Err(EnclaveError::BadPoP);
        }
        match pop.target_receipt() {
            Some(r) if r.ok => Ok(()),
            _ => Err(EnclaveError::TxFailed),
        }
    }

    fn open_session(&mut self, id_p: &Digest) -> Result<&mut Session, EnclaveError> {
        let s = self.sessions.get_mut(id_p).ok_or(EnclaveError::UnknownProposal)?;
        if s.closed {
            return Err(EnclaveError::Closed);
        }
        Ok(s)
    }

    fn sign_tx(&self, payload: TxPayload) -> Transaction {
        Transaction::new(&self.account, payload)
    }

    /// Validates one sealed input for a session and returns it if usable.
    fn accept_input(&self, session: &Session, id_p: &Digest, sealed: &Sealed) -> Option<InputSubmission> {
        let net = self.network.as_ref()?;
        let input = messages::unseal_input(&net.sk, sealed, self.config.address_width)?;
        if input.id_p != *id_p || !session.parties().contains(&input.party) {
            return None;
        }
        let app = self.app_for(&session.proposal).ok()?;
        if !app.policy.params_conform(&input.party, &input.x) {
            return None;
        }
        let shared = derive_shared(&net.sk, &sealed.from_pk).ok()?;
        pledge_matches(&input.x, &input.k_x, &shared, &input.party, &input.pledge).then_some(input)
    }

    fn restore(&mut self, who: &[Address], q: u64) {
        for a in who {
            let bal = self.cached_coins.entry(a.clone()).or_insert(0);
            *bal = bal.saturating_add(q);
        }
    }

    /// Unseals acks, keeping the first one seen per address.
    fn record_acks(&mut self, id_p: &Digest, acks: &[Sealed]) -> Result<(), EnclaveError> {
        let width = self.config.address_width;
        let sk = self.net()?.sk.clone();
        let s = self.sessions.get_mut(id_p).ok_or(EnclaveError::UnknownProposal)?;
        for sealed in acks {
            if let Some(ack) = messages::unseal_ack(&sk, sealed, width) {
                if ack.id_p == *id_p {
                    s.acks.entry(ack.party.clone()).or_insert(ack.join);
                    s.pks.entry(ack.party).or_insert(sealed.from_pk);
                }
            }
        }
        Ok(())
    }

    /// Parties that negotiation would settle on, after checking collateral.
    fn settle_check(&self, id_p: &Digest) -> Result<Vec<Address>, EnclaveError> {
        let s = self.sessions.get(id_p).ok_or(EnclaveError::UnknownProposal)?;
        let app = self.app_for(&s.proposal)?;
        let acks: Vec<Ack> = s
            .acks
            .iter()
            .map(|(party, join)| Ack { id_p: *id_p, party: party.clone(), join: *join })
            .collect();
        let parties = conform(id_p, &acks, &app.policy).ok_or(EnclaveError::ConformFailed)?;
        let q = s.proposal.q;
        for who in std::iter::once(&self.account.ad).chain(&parties) {
            if self.cached_coins(who) < q {
                return Err(EnclaveError::InsufficientCoins(who.clone()));
            }
        }
        Ok(parties)
    }

    // ---- protocol operations ----

    /// `generateIDp`: registers the proposal and returns the signed announcement.
    pub fn generate_id_p(&mut self, p: Proposal) -> Result<NetworkSigned<Announcement>, EnclaveError> {
        self.require_specified()?;
        self.app_for(&p)?;
        let id_p = p.id();
        self.sessions.entry(id_p).or_insert_with(|| Session::new(p.clone()));
        let net = self.net()?;
        Ok(NetworkSigned::new(&net.sk, Announcement { id_p, proposal: p }))
    }

    /// `negotiate`: settles the party list and locks collateral in the cache.
    pub fn negotiate(
        &mut self,
        id_p: &Digest,
        acks: &[Sealed],
    ) -> Result<NetworkSigned<Settlement>, EnclaveError> {
        self.require_specified()?;
        let s = self.open_session(id_p)?;
        match s.status {
            EnclaveStatus::Negotiated => return Ok(s.settlement.clone().expect("settled")),
            EnclaveStatus::Empty => {}
            other => return Err(EnclaveError::WrongStatus(other)),
        }
        self.record_acks(id_p, acks)?;
        let parties = self.settle_check(id_p)?;
        let mut deducted = vec![self.account.ad.clone()];
        deducted.extend(parties.iter().cloned());
        let s = &self.sessions[id_p];
        let q = s.proposal.q;
        let settled = SettledProposal { id_p: *id_p, proposal: s.proposal.clone(), parties };
        let signed = NetworkSigned::new(&self.net()?.sk, Settlement { settled });
        for who in &deducted {
            *self.cached_coins.get_mut(who).expect("checked above") -= q;
        }
        let s = self.sessions.get_mut(id_p).unwrap();
        s.deducted = deducted;
        s.settlement = Some(signed.clone());
        s.status = EnclaveStatus::Negotiated;
        Ok(signed)
    }

    /// `failNegotiation`: after a confirmed `TX_chaT` past `h_neg`, merge the on-chain acks
    /// carried by the proof and fail the proposal if it still cannot settle.
    pub fn fail_negotiation(&mut self, tx_chat: &Transaction, pop: &PoP) -> Result<Transaction, EnclaveError> {
        self.require_specified()?;
        let TxPayload::ChallengeTee { proposal } = &tx_chat.payload else {
            return Err(EnclaveError::WrongTx);
        };
        self.app_for(proposal)?;
        self.check_pop(tx_chat, pop)?;
        let id_p = proposal.id();
        let confirmed = pop.confirmed_height(self.config.finality_depth).ok_or(EnclaveError::TooEarly)?;
        if confirmed <= proposal.h_neg {
            return Err(EnclaveError::TooEarly);
        }
        let s = self.sessions.entry(id_p).or_insert_with(|| Session::new(proposal.clone()));
        if s.closed {
            return Err(EnclaveError::Closed);
        }
        if s.status != EnclaveStatus::Empty {
            return Err(EnclaveError::WrongStatus(s.status));
        }
        let on_chain: Vec<Sealed> = pop
            .entries()
            .filter(|(h, _, r)| r.ok && *h < proposal.h_neg)
            .filter_map(|(_, tx, _)| ack_from_tx(tx, &id_p))
            .collect();
        self.record_acks(&id_p, &on_chain)?;
        if self.settle_check(&id_p).is_ok() {
            return Err(EnclaveError::NegotiationPossible);
        }
        self.sessions.get_mut(&id_p).unwrap().closed = true;
        Ok(self.sign_tx(TxPayload::FailNegotiation { id_p }))
    }

    /// `execute`: collects inputs, and once every settled party has a valid one, evaluates
    /// over the proven state array.
    pub fn execute(
        &mut self,
        id_p: &Digest,
        inputs: &[Sealed],
        snapshot: &StateSnapshot,
    ) -> Result<ExecuteOutcome, EnclaveError> {
        self.require_specified()?;
        let s = self.open_session(id_p)?;
        if s.status != EnclaveStatus::Negotiated {
            return Err(EnclaveError::WrongStatus(s.status));
        }
        let s = &self.sessions[id_p];
        let accepted: Vec<(InputSubmission, PublicKey)> = inputs
            .iter()
            .filter_map(|sealed| self.accept_input(s, id_p, sealed).map(|i| (i, sealed.from_pk)))
            .collect();
        let s = self.sessions.get_mut(id_p).unwrap();
        for (input, pk) in accepted {
            s.pks.entry(input.party.clone()).or_insert(pk);
            s.inputs.entry(input.party.clone()).or_insert(input);
        }
        let missing = s.missing();
        if !missing.is_empty() {
            return Ok(ExecuteOutcome::Suspicious(missing));
        }
        self.run_eval(id_p, snapshot)?;
        Ok(ExecuteOutcome::Executed)
    }

    fn run_eval(&mut self, id_p: &Digest, snapshot: &StateSnapshot) -> Result<(), EnclaveError> {
        let s = &self.sessions[id_p];
        let app = lookup_app(&self.apps, &s.proposal)?;
        if snapshot.namespace != app.namespace {
            return Err(EnclaveError::BadSnapshot);
        }
        let confirmed = self
            .checkpoints
            .iter()
            .find_map(|cp| snapshot.verify(cp, self.config.finality_depth))
            .ok_or(EnclaveError::BadSnapshot)?;
        let parties = s.parties().to_vec();
        let pks: Vec<PublicKey> = parties.iter().map(|p| s.pks[p]).collect();
        let x: Vec<Value> = parties.iter().map(|p| s.inputs[p].x.clone()).collect();
        let k_x: Vec<SymmetricKey> = parties.iter().map(|p| s.inputs[p].k_x.clone()).collect();
        let net_sk = self.net()?.sk.clone();
        let out = eval(app, &parties, &pks, &x, &k_x, &snapshot.commitments, &net_sk, &mut self.keygen)?;
        let s = self.sessions.get_mut(id_p).unwrap();
        s.output = Some(out);
        s.status = EnclaveStatus::Executed;
        self.trust_checkpoint(confirmed);
        Ok(())
    }

    /// `challengeParties`: publishes the suspicious list.
    pub fn challenge_parties(&mut self, id_p: &Digest, suspicious: &[Address]) -> Result<Transaction, EnclaveError> {
        self.require_specified()?;
        let s = self.open_session(id_p)?;
        if s.status != EnclaveStatus::Negotiated {
            return Err(EnclaveError::WrongStatus(s.status));
        }
        if suspicious.is_empty() {
            return Err(EnclaveError::EmptyChallenge);
        }
        let mut list: Vec<Address> = suspicious.to_vec();
        list.sort();
        list.dedup();
        if let Some(p) = list.iter().find(|p| !s.parties().contains(p)) {
            return Err(EnclaveError::NotParty(p.clone()));
        }
        s.challenged = list.clone();
        Ok(self.sign_tx(TxPayload::ChallengeParties { id_p: *id_p, suspicious: list }))
    }

    /// `punishParties`: reads on-chain responses confirmed before the deadline from a proof
    /// that covers it, then either resumes or emits `TX_pnsP`.
    pub fn punish_parties(&mut self, tx_chap: &Transaction, pop: &PoP) -> Result<PunishOutcome, EnclaveError> {
        self.require_specified()?;
        let TxPayload::ChallengeParties { id_p, suspicious } = &tx_chap.payload else {
            return Err(EnclaveError::WrongTx);
        };
        if tx_chap.sender != self.account.ad {
            return Err(EnclaveError::WrongTx);
        }
        self.check_pop(tx_chap, pop)?;
        let tau_resp = self.config.tau_resp;
        let s = self.open_session(id_p)?;
        if s.status != EnclaveStatus::Negotiated {
            return Err(EnclaveError::WrongStatus(s.status));
        }
        let deadline = s.proposal.response_deadline(tau_resp);
        let confirmed = pop.confirmed_height(self.config.finality_depth).ok_or(EnclaveError::TooEarly)?;
        if confirmed < deadline {
            return Err(EnclaveError::TooEarly);
        }
        // A challenge mined too late to answer proves nothing against the parties.
        let challenged_at = pop.inclusion_height().ok_or(EnclaveError::WrongTx)?;
        if challenged_at + 1 >= deadline {
            return Err(EnclaveError::ChallengeTooLate);
        }
        let s = &self.sessions[id_p];
        let responses: Vec<(InputSubmission, PublicKey)> = pop
            .entries()
            .filter(|(h, tx, r)| r.ok && *h < deadline && suspicious.contains(&tx.sender))
            .filter_map(|(_, tx, _)| match &tx.payload {
                TxPayload::PartyResponse { id_p: rid, response } if rid == id_p => {
                    let sealed = Sealed {
                        kind: SealedKind::Input,
                        from: tx.sender.clone(),
                        from_pk: tx.sender_pk,
                        ct: response.clone(),
                    };
                    self.accept_input(s, id_p, &sealed).map(|i| (i, tx.sender_pk))
                }
                _ => None,
            })
            .collect();
        let s = self.sessions.get_mut(id_p).unwrap();
        for (input, pk) in responses {
            s.pks.entry(input.party.clone()).or_insert(pk);
            s.inputs.entry(input.party.clone()).or_insert(input);
        }
        let guilty = s.missing();
        if guilty.is_empty() {
            return Ok(PunishOutcome::Resume);
        }
        s.closed = true;
        let q = s.proposal.q;
        let innocent: Vec<Address> = s.deducted.iter().filter(|a| !guilty.contains(a)).cloned().collect();
        self.restore(&innocent, q);
        Ok(PunishOutcome::Punish(self.sign_tx(TxPayload::PunishParties { id_p: *id_p, guilty })))
    }

    /// `commit`: the output transaction with stripped commitments and the network-encrypted keys.
    pub fn commit(&mut self, id_p: &Digest) -> Result<Transaction, EnclaveError> {
        self.require_specified()?;
        let s = self.open_session(id_p)?;
        if s.status != EnclaveStatus::Executed {
            return Err(EnclaveError::WrongStatus(s.status));
        }
        if let Some(tx) = &s.tx_cmt {
            return Ok(tx.clone());
        }
        let s = &self.sessions[id_p];
        let out = s.output.as_ref().expect("executed");
        let mut bundle = Vec::with_capacity(BUNDLE_ENTRY * out.state_keys.len());
        for (i, party) in s.parties().iter().enumerate() {
            bundle.extend_from_slice(out.state_keys[i].as_bytes());
            bundle.extend_from_slice(out.return_keys[i].as_bytes());
            bundle.extend_from_slice(&s.pks[party].to_bytes());
        }
        let net = self.net()?;
        let k_net = derive_shared(&net.sk, &net.pk)?;
        let payload = TxPayload::Commit {
            proposal: s.proposal.clone(),
            proof: out.proof,
            aux: out.aux,
            new_states: out.c_new_states.iter().map(strip_key_slot).collect(),
            returns: out.c_returns.iter().map(strip_key_slot).collect(),
            e_k: sym_encrypt(&k_net, &bundle, &e_k_context(id_p)),
        };
        let tx = self.sign_tx(payload);
        self.sessions.get_mut(id_p).unwrap().tx_cmt = Some(tx.clone());
        Ok(tx)
    }

    /// `complete`: any enclave, given a confirmed successful `TX_cmt`, re-encrypts the output
    /// keys for their owners.
    pub fn complete(&mut self, tx_cmt: &Transaction, pop: &PoP) -> Result<Transaction, EnclaveError> {
        let net = self.net()?.clone();
        let TxPayload::Commit { proposal, new_states, returns, e_k, .. } = &tx_cmt.payload else {
            return Err(EnclaveError::WrongTx);
        };
        let id_p = proposal.id();
        if let Some(tx) = self.sessions.get(&id_p).and_then(|s| s.tx_com.clone()) {
            return Ok(tx);
        }
        self.check_pop(tx_cmt, pop)?;
        if pop.tip_height().unwrap_or(u64::MAX) >= proposal.completion_deadline() {
            return Err(EnclaveError::TooLate);
        }
        let k_net = derive_shared(&net.sk, &net.pk)?;
        let bundle = sym_decrypt(&k_net, e_k, &e_k_context(&id_p)).map_err(|_| EnclaveError::BadKeyBundle)?;
        if bundle.len() != BUNDLE_ENTRY * new_states.len() || returns.len() != new_states.len() {
            return Err(EnclaveError::BadKeyBundle);
        }
        let mut state_keys = Vec::with_capacity(new_states.len());
        let mut return_keys = Vec::with_capacity(returns.len());
        for (i, chunk) in bundle.chunks(BUNDLE_ENTRY).enumerate() {
            let k_s = SymmetricKey::from_slice(&chunk[..KEY_LEN])?;
            let k_r = SymmetricKey::from_slice(&chunk[KEY_LEN..2 * KEY_LEN])?;
            let pk = PublicKey::from_bytes(&chunk[2 * KEY_LEN..])?;
            let owner = pk.address(self.config.address_width);
            if new_states[i].owner != owner || returns[i].owner != owner {
                return Err(EnclaveError::BadKeyBundle);
            }
            let shared = derive_shared(&net.sk, &pk)?;
            state_keys.push(wrap_data_key(&k_s, &shared, &owner, &new_states[i].data_ct));
            return_keys.push(wrap_data_key(&k_r, &shared, &owner, &returns[i].data_ct));
        }
        let tx = self.sign_tx(TxPayload::Complete { id_p, state_keys, return_keys });
        let s = self.sessions.entry(id_p).or_insert_with(|| Session::new(proposal.clone()));
        s.status = EnclaveStatus::Completed;
        s.tx_com = Some(tx.clone());
        let deducted = std::mem::take(&mut s.deducted);
        self.restore(&deducted, proposal.q);
        Ok(tx)
    }
}

fn lookup_app<'a>(apps: &'a BTreeMap<Digest, App>, p: &Proposal) -> Result<&'a App, EnclaveError> {
    match apps.get(&p.f_hash) {
        Some(app) if app.p_hash() == p.p_hash => Ok(app),
        _ => Err(EnclaveError::UnknownApp),
    }
}

/// Reconstructs the sealed ack carried by an on-chain `TX_ack`.
pub fn ack_from_tx(tx: &Transaction, id_p: &Digest) -> Option<Sealed> {
    match &tx.payload {
        TxPayload::Acknowledge { id_p: aid, ack } if aid == id_p => Some(Sealed {
            kind: SealedKind::Ack,
            from: tx.sender.clone(),
            from_pk: tx.sender_pk,
            ct: ack.clone(),
        }),
        _ => None,
    }
}

/// `conform`: the settled party list if the acks meet the policy. Acks for another
/// proposal are ignored and only the first ack per address counts.
pub fn conform(id_p: &Digest, acks: &[Ack], policy: &crate::apps::Policy) -> Option<Vec<Address>> {
    let mut seen = BTreeSet::new();
    let mut joiners = BTreeSet::new();
    for ack in acks.iter().filter(|a| a.id_p == *id_p) {
        if seen.insert(ack.party.clone()) && ack.join {
            joiners.insert(ack.party.clone());
        }
    }
    policy.settle(&joiners)
}
