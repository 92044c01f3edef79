//! Executor hosts: each drives one enclave from the network and the chain. The first
//! executor is the specified enclave's host and runs the negotiation and execution;
//! every executor completes confirmed outputs.

use std::collections::{BTreeMap, BTreeSet};

use serde_json::json;

use super::msg::Msg;
use super::scenario::Behavior;
use super::sim::Ctx;
use crate::chain::{Transaction, TxPayload};
use crate::crypto::{Address, Digest};
use crate::enclave::{
    ack_from_tx, build_snapshot, Enclave, EnclaveError, ExecuteOutcome, NetworkSigned, PunishOutcome,
    Sealed, Settlement,
};
use crate::protocol::{Proposal, ProposalStatus};

#[derive(Clone, Debug, PartialEq, Eq)]
enum Phase {
    Negotiating,
    /// Negotiation aborted; waits for a challenge record and late acks.
    Failed,
    Collecting { until: u64 },
    Ready,
    Challenging(Vec<Address>),
    AwaitResponses(Transaction),
    Committed,
    Done,
}

struct Session {
    proposal: Proposal,
    namespace: String,
    phase: Phase,
    announced_at: u64,
    acks: Vec<Sealed>,
    on_chain_acks: Vec<Sealed>,
    tried_acks: usize,
    settlement: Option<NetworkSigned<Settlement>>,
    inputs: Vec<Sealed>,
    chat: Option<Transaction>,
    rebroadcast: bool,
}

struct Completion {
    cmt: Transaction,
    included: u64,
    com: Option<Transaction>,
    completed_at: u64,
    submitted: bool,
    on_chain: bool,
    gave_up: bool,
}

pub(crate) struct ExecutorActor {
    me: usize,
    enclave: Enclave,
    behavior: Behavior,
    sessions: BTreeMap<Digest, Session>,
    busy: BTreeMap<String, Digest>,
    completions: BTreeMap<Digest, Completion>,
    detained: Vec<(Option<u64>, Transaction)>,
    seen_height: u64,
    synced: bool,
}

impl ExecutorActor {
    pub fn new(me: usize, enclave: Enclave, behavior: Behavior) -> Self {
        ExecutorActor {
            me,
            enclave,
            behavior,
            sessions: BTreeMap::new(),
            busy: BTreeMap::new(),
            completions: BTreeMap::new(),
            detained: Vec::new(),
            seen_height: 0,
            synced: false,
        }
    }

    fn silent(&self) -> bool {
        self.behavior == Behavior::SilentExecutor
    }

    fn is_specified(&self, ctx: &Ctx<'_>) -> bool {
        ctx.dir.executors.first() == Some(&self.me)
    }

    fn op(&self, ctx: &mut Ctx<'_>, id_p: &Digest, op: &str, result: Result<String, &EnclaveError>) {
        let (ok, detail) = match result {
            Ok(s) => (true, s),
            Err(e) => (false, e.to_string()),
        };
        let status = self.enclave.status(id_p).as_str();
        ctx.log("enclave", Some(id_p), op, json!({"ok": ok, "detail": detail, "status": status}));
    }

    fn open(&mut self, ctx: &mut Ctx<'_>, proposal: Proposal) {
        let id_p = proposal.id();
        if self.sessions.contains_key(&id_p) {
            return;
        }
        match self.enclave.generate_id_p(proposal.clone()) {
            Ok(announcement) => {
                self.op(ctx, &id_p, "generate_id_p", Ok(String::new()));
                for &p in &ctx.dir.parties {
                    ctx.send(p, Msg::Announce(announcement.clone()), Some(id_p));
                }
                let namespace = ctx.chain.executor().namespace_of(&proposal.f_hash).unwrap_or_default().to_string();
                self.sessions.insert(
                    id_p,
                    Session {
                        proposal,
                        namespace,
                        phase: Phase::Negotiating,
                        announced_at: ctx.tick,
                        acks: Vec::new(),
                        on_chain_acks: Vec::new(),
                        tried_acks: 0,
                        settlement: None,
                        inputs: Vec::new(),
                        chat: None,
                        rebroadcast: false,
                    },
                );
            }
            Err(e) => self.op(ctx, &id_p, "generate_id_p", Err(&e)),
        }
    }

    pub fn on_message(&mut self, ctx: &mut Ctx<'_>, _from: usize, msg: Msg) {
        if self.silent() || !self.is_specified(ctx) {
            return;
        }
        match msg {
            Msg::Propose(p) => self.open(ctx, p),
            Msg::Ack(sealed) => {
                for s in self.sessions.values_mut() {
                    if matches!(s.phase, Phase::Negotiating | Phase::Failed) {
                        s.acks.push(sealed.clone());
                    }
                }
            }
            Msg::Input(sealed) => {
                for s in self.sessions.values_mut() {
                    if matches!(s.phase, Phase::Collecting { .. }) {
                        s.inputs.push(sealed.clone());
                    }
                }
            }
            Msg::Announce(_) | Msg::Settle(_) | Msg::Keys(_) => {}
        }
    }

    fn scan_chain(&mut self, ctx: &mut Ctx<'_>) {
        while self.seen_height < ctx.chain.height() {
            self.seen_height += 1;
            let block = ctx.chain.block(self.seen_height).expect("height").clone();
            for (tx, r) in block.entries() {
                let Some(id_p) = tx.payload.proposal_id() else { continue };
                if !r.ok {
                    continue;
                }
                match &tx.payload {
                    TxPayload::Commit { .. } => {
                        self.completions.entry(id_p).or_insert(Completion {
                            cmt: tx.clone(),
                            included: block.height(),
                            com: None,
                            completed_at: 0,
                            submitted: false,
                            on_chain: false,
                            gave_up: false,
                        });
                    }
                    TxPayload::Complete { .. } => {
                        if let Some(c) = self.completions.get_mut(&id_p) {
                            c.on_chain = true;
                        }
                    }
                    TxPayload::ChallengeTee { proposal } if self.is_specified(ctx) => {
                        if !self.sessions.contains_key(&id_p) {
                            self.open(ctx, proposal.clone());
                        }
                        if let Some(s) = self.sessions.get_mut(&id_p) {
                            s.chat = Some(tx.clone());
                        }
                    }
                    TxPayload::Acknowledge { .. } => {
                        if let (Some(s), Some(sealed)) = (self.sessions.get_mut(&id_p), ack_from_tx(tx, &id_p)) {
                            if block.height() < s.proposal.h_neg {
                                s.on_chain_acks.push(sealed);
                            }
                        }
                    }
                    _ => {}
                }
            }
        }
    }

    pub fn on_tick(&mut self, ctx: &mut Ctx<'_>) {
        if self.silent() {
            return;
        }
        if !self.synced && ctx.chain.height() >= 1 {
            self.enclave.sync_coins(ctx.chain.executor().balances().clone());
            self.synced = true;
        }
        self.scan_chain(ctx);
        let busy: Vec<(String, Digest)> = self.busy.iter().map(|(k, v)| (k.clone(), *v)).collect();
        for (ns, id) in busy {
            if ctx.chain.executor().record(&id).is_some_and(|r| r.sta.is_terminal()) {
                self.busy.remove(&ns);
            }
        }
        self.release_detained(ctx);
        if self.is_specified(ctx) {
            let ids: Vec<Digest> = self.sessions.keys().copied().collect();
            for id in ids {
                self.step_session(ctx, id);
            }
        }
        self.step_completions(ctx);
    }

    fn release_detained(&mut self, ctx: &mut Ctx<'_>) {
        let mut keep = Vec::new();
        for (at, tx) in std::mem::take(&mut self.detained) {
            match at {
                Some(t) if ctx.tick >= t => ctx.submit(tx),
                _ => keep.push((at, tx)),
            }
        }
        self.detained = keep;
    }

    fn best_checkpoint(&self, below: u64) -> Option<u64> {
        self.enclave.checkpoints().iter().map(|c| c.height).filter(|h| *h < below).max()
    }

    fn settle(&mut self, ctx: &mut Ctx<'_>, id: Digest) {
        let s = &self.sessions[&id];
        // Past h_neg only acknowledgements confirmed on chain before it still count.
        let mut acks = if ctx.chain.height() < s.proposal.h_neg { s.acks.clone() } else { Vec::new() };
        acks.extend(s.on_chain_acks.iter().cloned());
        let tried = s.acks.len() + s.on_chain_acks.len();
        let result = self.enclave.negotiate(&id, &acks);
        let s = self.sessions.get_mut(&id).unwrap();
        s.tried_acks = tried;
        match result {
            Ok(signed) => {
                s.settlement = Some(signed.clone());
                s.phase = Phase::Collecting { until: ctx.tick + 2 * ctx.dir.delta + 1 };
                let parties = signed.body.settled.parties.clone();
                self.op(ctx, &id, "negotiate", Ok(format!("{} parties", parties.len())));
                for p in parties {
                    if let Some(&i) = ctx.dir.by_address.get(&p) {
                        ctx.send(i, Msg::Settle(signed.clone()), Some(id));
                    }
                }
            }
            Err(e) => {
                s.phase = Phase::Failed;
                self.op(ctx, &id, "negotiate", Err(&e));
            }
        }
    }

    fn step_session(&mut self, ctx: &mut Ctx<'_>, id: Digest) {
        let delta = ctx.dir.delta;
        let k = ctx.dir.finality_depth;
        let record = ctx.chain.executor().record(&id).cloned();
        if record.as_ref().is_some_and(|r| r.sta.is_terminal()) {
            self.sessions.get_mut(&id).unwrap().phase = Phase::Done;
            return;
        }
        let s = self.sessions.get_mut(&id).unwrap();

        // a challenge record after settlement: resend p' to parties that may have missed it
        if record.is_some() && !s.rebroadcast {
            if let Some(signed) = s.settlement.clone() {
                s.rebroadcast = true;
                for p in &signed.body.settled.parties {
                    if let Some(&i) = ctx.dir.by_address.get(p) {
                        ctx.send(i, Msg::Settle(signed.clone()), Some(id));
                    }
                }
            }
        }

        match s.phase.clone() {
            Phase::Negotiating => {
                if ctx.tick >= s.announced_at + 2 * delta + 1 {
                    self.settle(ctx, id);
                }
            }
            Phase::Failed => {
                let new_acks = s.acks.len() + s.on_chain_acks.len() > s.tried_acks;
                if new_acks {
                    self.settle(ctx, id);
                    return;
                }
                let Some(chat) = s.chat.clone() else { return };
                if ctx.chain.confirmed_height() <= s.proposal.h_neg {
                    return;
                }
                let Some((incl, _, _)) = ctx.chain.locate(&chat.id()) else { return };
                let Some(cp) = self.best_checkpoint(incl) else { return };
                let Ok(pop) = ctx.chain.pop_between(&chat.id(), cp, ctx.chain.height()) else { return };
                match self.enclave.fail_negotiation(&chat, &pop) {
                    Ok(tx) => {
                        self.op(ctx, &id, "fail_negotiation", Ok(String::new()));
                        ctx.submit(tx);
                        self.sessions.get_mut(&id).unwrap().phase = Phase::Done;
                    }
                    Err(EnclaveError::NegotiationPossible) => {
                        self.op(ctx, &id, "fail_negotiation", Err(&EnclaveError::NegotiationPossible));
                        self.sessions.get_mut(&id).unwrap().tried_acks = 0;
                    }
                    Err(e) => self.op(ctx, &id, "fail_negotiation", Err(&e)),
                }
            }
            Phase::Collecting { until } => {
                if ctx.tick >= until {
                    s.phase = Phase::Ready;
                }
            }
            Phase::Ready => self.try_execute(ctx, id),
            Phase::Challenging(list) => {
                if record.is_some_and(|r| r.sta == ProposalStatus::Proposed) {
                    match self.enclave.challenge_parties(&id, &list) {
                        Ok(tx) => {
                            self.op(ctx, &id, "challenge_parties", Ok(format!("{} challenged", list.len())));
                            ctx.submit(tx.clone());
                            self.sessions.get_mut(&id).unwrap().phase = Phase::AwaitResponses(tx);
                        }
                        Err(e) => {
                            self.op(ctx, &id, "challenge_parties", Err(&e));
                            self.sessions.get_mut(&id).unwrap().phase = Phase::Done;
                        }
                    }
                }
            }
            Phase::AwaitResponses(chap) => {
                let Some((incl, _, r)) = ctx.chain.locate(&chap.id()) else { return };
                if !r.ok {
                    s.phase = Phase::Done;
                    return;
                }
                let deadline = s.proposal.response_deadline(ctx.dir.tau_resp);
                if ctx.chain.height() + 1 < deadline.max(incl) + k {
                    return;
                }
                let Some(cp) = self.best_checkpoint(incl) else { return };
                let Ok(pop) = ctx.chain.pop_between(&chap.id(), cp, ctx.chain.height()) else { return };
                match self.enclave.punish_parties(&chap, &pop) {
                    Ok(PunishOutcome::Resume) => {
                        self.op(ctx, &id, "punish_parties", Ok("resume".into()));
                        self.sessions.get_mut(&id).unwrap().phase = Phase::Ready;
                    }
                    Ok(PunishOutcome::Punish(tx)) => {
                        self.op(ctx, &id, "punish_parties", Ok("punish".into()));
                        ctx.submit(tx);
                        self.sessions.get_mut(&id).unwrap().phase = Phase::Done;
                    }
                    Err(e) => {
                        self.op(ctx, &id, "punish_parties", Err(&e));
                        self.sessions.get_mut(&id).unwrap().phase = Phase::Done;
                    }
                }
            }
            Phase::Committed | Phase::Done => {}
        }
    }

    fn try_execute(&mut self, ctx: &mut Ctx<'_>, id: Digest) {
        let s = &self.sessions[&id];
        let ns = s.namespace.clone();
        if self.busy.get(&ns).is_some_and(|other| *other != id) || ctx.chain.executor().locked_by(&ns).is_some() {
            return;
        }
        let Some(cp) = self.best_checkpoint(ctx.chain.confirmed_height()) else { return };
        let Some(snapshot) = build_snapshot(ctx.chain, &ns, cp) else { return };
        let inputs = std::mem::take(&mut self.sessions.get_mut(&id).unwrap().inputs);
        match self.enclave.execute(&id, &inputs, &snapshot) {
            Ok(ExecuteOutcome::Executed) => {
                self.op(ctx, &id, "execute", Ok("executed".into()));
                match self.enclave.commit(&id) {
                    Ok(tx) => {
                        self.op(ctx, &id, "commit", Ok(String::new()));
                        self.busy.insert(ns, id);
                        self.sessions.get_mut(&id).unwrap().phase = Phase::Committed;
                        match &self.behavior {
                            Behavior::DetainCmtExecutor { release_after } => {
                                let at = release_after.map(|d| ctx.tick + d);
                                ctx.log("detain", Some(&id), "cmt", json!({"release_at": at}));
                                self.detained.push((at, tx));
                            }
                            _ => ctx.submit(tx),
                        }
                    }
                    Err(e) => self.op(ctx, &id, "commit", Err(&e)),
                }
            }
            Ok(ExecuteOutcome::Suspicious(list)) => {
                self.op(ctx, &id, "execute", Ok(format!("{} suspicious", list.len())));
                self.sessions.get_mut(&id).unwrap().phase = Phase::Challenging(list);
            }
            Err(EnclaveError::BadSnapshot) => {}
            Err(e) => {
                self.op(ctx, &id, "execute", Err(&e));
                self.sessions.get_mut(&id).unwrap().phase = Phase::Done;
            }
        }
    }

    fn step_completions(&mut self, ctx: &mut Ctx<'_>) {
        let k = ctx.dir.finality_depth;
        let b = ctx.dir.block_ticks;
        let specified = self.is_specified(ctx);
        let ids: Vec<Digest> = self.completions.keys().copied().collect();
        for id in ids {
            let c = &self.completions[&id];
            if c.gave_up || c.on_chain && c.com.is_some() {
                continue;
            }
            if c.com.is_none() {
                let through = c.included + k - 1;
                if ctx.chain.height() < through {
                    continue;
                }
                let result = self
                    .best_checkpoint(c.included)
                    .ok_or(EnclaveError::BadPoP)
                    .and_then(|cp| ctx.chain.pop_between(&c.cmt.id(), cp, through).map_err(|_| EnclaveError::BadPoP))
                    .and_then(|pop| self.enclave.complete(&c.cmt, &pop));
                match result {
                    Ok(tx) => {
                        self.op(ctx, &id, "complete", Ok(String::new()));
                        self.deliver_keys(ctx, &id, &tx);
                        let c = self.completions.get_mut(&id).unwrap();
                        c.com = Some(tx.clone());
                        c.completed_at = ctx.tick;
                        if specified && self.behavior.is_honest_with_com() && !c.on_chain {
                            c.submitted = true;
                            ctx.submit(tx);
                        }
                    }
                    Err(e) => {
                        self.op(ctx, &id, "complete", Err(&e));
                        self.completions.get_mut(&id).unwrap().gave_up = true;
                    }
                }
                continue;
            }
            // backup submission by the other executors
            let c = self.completions.get_mut(&id).unwrap();
            if !c.submitted && !c.on_chain && self.behavior.is_honest_with_com() && ctx.tick >= c.completed_at + 2 * b {
                let still_open = ctx.chain.executor().record(&id).is_some_and(|r| r.sta == ProposalStatus::Proposed);
                if still_open && !ctx.pending(&id, |t| matches!(t, TxPayload::Complete { .. })) {
                    c.submitted = true;
                    ctx.submit(c.com.clone().unwrap());
                }
            }
        }
    }

    fn deliver_keys(&self, ctx: &mut Ctx<'_>, id: &Digest, tx_com: &Transaction) {
        let TxPayload::Commit { new_states, .. } = &self.completions[id].cmt.payload else { return };
        let owners: BTreeSet<usize> =
            new_states.iter().filter_map(|c| ctx.dir.by_address.get(&c.owner).copied()).collect();
        match &self.behavior {
            Behavior::DropComExecutor { leak_to, delay } => {
                if let Some(i) = leak_to.as_ref().and_then(|n| ctx.dir.names.iter().position(|x| x == n)) {
                    ctx.send_after(i, Msg::Keys(tx_com.clone()), Some(*id), *delay);
                }
            }
            _ => {
                for i in owners {
                    ctx.send(i, Msg::Keys(tx_com.clone()), Some(*id));
                }
            }
        }
    }
}

impl Behavior {
    fn is_honest_with_com(&self) -> bool {
        !matches!(self, Behavior::DropComExecutor { .. } | Behavior::SilentExecutor)
    }
}
