//! Party actors: propose, acknowledge, submit inputs, answer challenges, escalate on
//! silence, and learn their outputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::msg::Msg;
use super::scenario::{Behavior, Scenario};
use super::sim::Ctx;
use crate::apps::{self, Value};
use crate::chain::{Transaction, TxPayload};
use crate::crypto::{
    attach_key_slot, derive_shared, hash, open_commitment, Account, Commitment, Digest, SymmetricKey,
};
use crate::enclave::{input_commitment, seal_ack, seal_input, Ack, InputSubmission, Sealed};
use crate::protocol::{Proposal, ProposalStatus, SettledProposal};

struct Plan {
    index: usize,
    initiator: bool,
    start_tick: u64,
    /// `Some(true)` joins, `Some(false)` declines, `None` ignores the announcement.
    join: Option<bool>,
    input: Option<Value>,
    proposal: Option<Proposal>,
    id_p: Option<Digest>,
    proposed_at: Option<u64>,
    announced_at: Option<u64>,
    ack: Option<Sealed>,
    settled: Option<SettledProposal>,
    settled_at: Option<u64>,
    input_sent: Option<Sealed>,
    cmt: Option<Transaction>,
    learned: bool,
    chat_sent: bool,
    ack_on_chain: bool,
    challenged: bool,
    resp_sent: bool,
    terminal: bool,
}

pub(crate) struct PartyActor {
    account: Account,
    behavior: Behavior,
    plans: Vec<Plan>,
    rng: ChaCha8Rng,
    seen_height: u64,
    /// Tick at which each namespace's state was last seen changing.
    ns_changed: std::collections::BTreeMap<String, u64>,
}

impl PartyActor {
    pub fn new(me: usize, account: Account, behavior: Behavior, scenario: &Scenario, seed: u64) -> Self {
        let name = &scenario.actors[me].name;
        let plans = scenario
            .proposals
            .iter()
            .enumerate()
            .map(|(index, p)| {
                let input = scenario.input_of(index, name);
                let join = if input.is_some() {
                    Some(true)
                } else if p.decline.contains(name) {
                    Some(false)
                } else {
                    None
                };
                Plan {
                    index,
                    initiator: &p.initiator == name,
                    start_tick: scenario.start_tick(p),
                    join,
                    input,
                    proposal: None,
                    id_p: None,
                    proposed_at: None,
                    announced_at: None,
                    ack: None,
                    settled: None,
                    settled_at: None,
                    input_sent: None,
                    cmt: None,
                    learned: false,
                    chat_sent: false,
                    ack_on_chain: false,
                    challenged: false,
                    resp_sent: false,
                    terminal: false,
                }
            })
            .collect();
        PartyActor {
            account,
            behavior,
            plans,
            rng: ChaCha8Rng::seed_from_u64(seed),
            seen_height: 0,
            ns_changed: Default::default(),
        }
    }

    fn plan_for(&mut self, id_p: &Digest) -> Option<&mut Plan> {
        self.plans.iter_mut().find(|p| p.id_p.as_ref() == Some(id_p))
    }

    fn build_input(&mut self, ctx: &Ctx<'_>, plan: usize) -> Option<Sealed> {
        if self.behavior == Behavior::WithholdInput {
            return None;
        }
        let p = &self.plans[plan];
        let x = p.input.clone()?;
        let id_p = p.id_p?;
        let shared = derive_shared(&self.account.sk, &ctx.dir.network_pk).ok()?;
        let k_x = SymmetricKey::from_bytes(self.rng.gen());
        let pledge = hash(&input_commitment(&x, &k_x, &shared, &self.account.ad));
        // a mismatching party reveals a different opening than the one it pledged
        let k_x = if self.behavior == Behavior::MismatchInput { SymmetricKey::from_bytes(self.rng.gen()) } else { k_x };
        let submission = InputSubmission { id_p, party: self.account.ad.clone(), x, k_x, pledge };
        Some(seal_input(&self.account, &ctx.dir.network_pk, &submission))
    }

    fn chat(&mut self, ctx: &mut Ctx<'_>, plan: usize, why: &str) {
        let p = &mut self.plans[plan];
        let (Some(proposal), Some(id_p)) = (p.proposal.clone(), p.id_p) else { return };
        p.chat_sent = true;
        let exists = ctx.chain.executor().record(&id_p).is_some()
            || ctx.pending(&id_p, |t| matches!(t, TxPayload::ChallengeTee { .. }));
        if !exists {
            ctx.log("escalate", Some(&id_p), why, json!({"index": p.index}));
            ctx.submit(Transaction::new(&self.account, TxPayload::ChallengeTee { proposal }));
        }
    }

    pub fn on_message(&mut self, ctx: &mut Ctx<'_>, from: usize, msg: Msg) {
        match msg {
            Msg::Announce(a) => {
                if !a.verify(&ctx.dir.network_pk) || a.body.proposal.id() != a.body.id_p || from != ctx.dir.executors[0] {
                    return;
                }
                let Some(i) = self.match_plan(ctx, &a.body.proposal) else { return };
                let p = &mut self.plans[i];
                p.proposal = Some(a.body.proposal.clone());
                p.id_p = Some(a.body.id_p);
                if p.announced_at.is_some() {
                    return;
                }
                p.announced_at = Some(ctx.tick);
                if let Some(join) = p.join {
                    let ack = Ack { id_p: a.body.id_p, party: self.account.ad.clone(), join };
                    let sealed = seal_ack(&self.account, &ctx.dir.network_pk, &ack);
                    p.ack = Some(sealed.clone());
                    ctx.send(from, Msg::Ack(sealed), Some(a.body.id_p));
                }
            }
            Msg::Settle(s) => {
                let settled = s.body.settled.clone();
                if !s.verify(&ctx.dir.network_pk) || !settled.parties.contains(&self.account.ad) {
                    return;
                }
                let Some(i) = self.plans.iter().position(|p| p.id_p == Some(settled.id_p)) else { return };
                if self.plans[i].settled.is_some() || self.plans[i].join != Some(true) {
                    return;
                }
                self.plans[i].settled = Some(settled.clone());
                self.plans[i].settled_at = Some(ctx.tick);
                // a late responder also keeps its input back until challenged
                if self.behavior == Behavior::LateResponder {
                    return;
                }
                if let Some(sealed) = self.build_input(ctx, i) {
                    self.plans[i].input_sent = Some(sealed.clone());
                    ctx.send(ctx.dir.executors[0], Msg::Input(sealed), Some(settled.id_p));
                }
            }
            Msg::Keys(tx) => {
                if ctx.dir.tees.contains(&tx.sender) && tx.verify_signature(ctx.scenario.chain.address_width) {
                    self.learn(ctx, &tx, "offchain");
                }
            }
            Msg::Propose(_) | Msg::Ack(_) | Msg::Input(_) => {}
        }
    }

    fn match_plan(&self, ctx: &Ctx<'_>, p: &Proposal) -> Option<usize> {
        let spec = ctx.scenario.proposals.get(p.nonce as usize)?;
        let app = apps::app(&spec.app, spec.settlement.min_parties)?;
        (app.f_hash() == p.f_hash && app.p_hash() == p.p_hash && spec.q == p.q && spec.tau_com == p.tau_com)
            .then_some(p.nonce as usize)
    }

    fn learn(&mut self, ctx: &mut Ctx<'_>, tx_com: &Transaction, via: &str) {
        let TxPayload::Complete { id_p, state_keys, return_keys } = &tx_com.payload else { return };
        let me = self.account.ad.clone();
        let Some(plan) = self.plans.iter().position(|p| p.id_p.as_ref() == Some(id_p)) else { return };
        if self.plans[plan].learned {
            return;
        }
        if self.plans[plan].cmt.is_none() {
            self.plans[plan].cmt = find_cmt(ctx, id_p);
        }
        let Some(TxPayload::Commit { new_states, returns, .. }) = self.plans[plan].cmt.as_ref().map(|t| &t.payload) else {
            return;
        };
        let Some(slot) = new_states.iter().position(|c| c.owner == me) else { return };
        let (Some(ks), Some(kr)) = (state_keys.get(slot), return_keys.get(slot)) else { return };
        let open = |c: &Commitment, k| {
            open_commitment(&self.account.sk, &ctx.dir.network_pk, &attach_key_slot(c, k))
                .ok()
                .and_then(|b| Value::from_bytes(&b))
        };
        let (Some(s), Some(r)) = (open(&new_states[slot], ks.clone()), open(&returns[slot], kr.clone())) else {
            return;
        };
        let index = self.plans[plan].index;
        self.plans[plan].learned = true;
        ctx.log("learn", Some(id_p), "state", json!({"index": index, "fingerprint": s.fingerprint().to_hex(), "via": via}));
        ctx.log("learn", Some(id_p), "return", json!({"index": index, "fingerprint": r.fingerprint().to_hex(), "via": via}));
    }

    fn scan_chain(&mut self, ctx: &mut Ctx<'_>) {
        let me = self.account.ad.clone();
        while self.seen_height < ctx.chain.height() {
            self.seen_height += 1;
            let block = ctx.chain.block(self.seen_height).expect("height").clone();
            if let Some(prev) = ctx.chain.block(self.seen_height - 1) {
                for sd in &block.header.states {
                    if prev.header.state_digest(&sd.namespace) != Some(sd.digest) {
                        self.ns_changed.insert(sd.namespace.clone(), ctx.tick);
                    }
                }
            }
            for (tx, r) in block.entries() {
                if !r.ok {
                    continue;
                }
                let Some(id_p) = tx.payload.proposal_id() else { continue };
                let Some(plan) = self.plan_for(&id_p) else { continue };
                match &tx.payload {
                    TxPayload::Commit { .. } => plan.cmt = Some(tx.clone()),
                    TxPayload::ChallengeParties { suspicious, .. } if suspicious.contains(&me) => {
                        plan.challenged = true;
                    }
                    TxPayload::Complete { .. } => {
                        let tx = tx.clone();
                        self.learn(ctx, &tx, "chain");
                    }
                    _ => {}
                }
            }
        }
    }

    pub fn on_tick(&mut self, ctx: &mut Ctx<'_>) {
        self.scan_chain(ctx);
        for i in 0..self.plans.len() {
            self.step_plan(ctx, i);
        }
    }

    fn step_plan(&mut self, ctx: &mut Ctx<'_>, i: usize) {
        let delta = ctx.dir.delta;
        let b = ctx.dir.block_ticks;
        let k = ctx.dir.finality_depth;
        let height = ctx.chain.height();

        if self.plans[i].initiator && self.plans[i].proposed_at.is_none() && ctx.tick >= self.plans[i].start_tick {
            let spec = &ctx.scenario.proposals[self.plans[i].index];
            let app = apps::app(&spec.app, spec.settlement.min_parties).expect("validated");
            let proposal = Proposal {
                f_hash: app.f_hash(),
                p_hash: app.p_hash(),
                q: spec.q,
                h_neg: height + spec.h_neg,
                tau_com: spec.tau_com,
                nonce: self.plans[i].index as u64,
            };
            let id_p = proposal.id();
            let p = &mut self.plans[i];
            p.proposal = Some(proposal.clone());
            p.id_p = Some(id_p);
            p.proposed_at = Some(ctx.tick);
            ctx.register_proposal(id_p, p.index);
            ctx.log("proposal", Some(&id_p), spec.app.clone(), json!({"index": p.index, "h_neg": proposal.h_neg, "q": proposal.q}));
            ctx.send(ctx.dir.executors[0], Msg::Propose(proposal), Some(id_p));
            return;
        }

        let Some(id_p) = self.plans[i].id_p else { return };
        let record = ctx.chain.executor().record(&id_p).cloned();
        if let Some(r) = &record {
            if r.sta.is_terminal() {
                self.plans[i].terminal = true;
            }
        }
        if self.plans[i].terminal {
            return;
        }
        let proposal = self.plans[i].proposal.clone().expect("known with id");

        // anyone with a stake punishes a tee that let the completion window lapse
        let stake = self.plans[i].initiator || self.plans[i].join == Some(true);
        if let (Some(r), true) = (&record, stake) {
            if r.sta == ProposalStatus::Proposed
                && height >= r.completion_deadline()
                && !ctx.pending(&id_p, |t| matches!(t, TxPayload::PunishTee { .. }))
            {
                ctx.log("escalate", Some(&id_p), "punish tee", json!({"index": self.plans[i].index}));
                ctx.submit(Transaction::new(&self.account, TxPayload::PunishTee { id_p }));
                return;
            }
        }

        // answer a challenge
        if self.plans[i].challenged && !self.plans[i].resp_sent && self.behavior != Behavior::WithholdInput {
            let deadline = proposal.response_deadline(ctx.dir.tau_resp);
            let late = self.behavior == Behavior::LateResponder;
            if !late || height + 1 >= deadline {
                if self.plans[i].input_sent.is_none() {
                    self.plans[i].input_sent = self.build_input(ctx, i);
                }
                if let Some(sealed) = self.plans[i].input_sent.clone() {
                    self.plans[i].resp_sent = true;
                    ctx.submit(Transaction::new(&self.account, TxPayload::PartyResponse { id_p, response: sealed.ct }));
                }
            }
        }

        let p = &self.plans[i];
        if p.chat_sent && record.is_none() {
            return;
        }

        // initiator: no announcement
        if p.initiator && p.announced_at.is_none() && !p.chat_sent {
            if ctx.tick > p.proposed_at.unwrap_or(0) + 4 * delta + 2 {
                self.chat(ctx, i, "no announcement");
            }
            return;
        }
        if p.join != Some(true) || p.announced_at.is_none() {
            return;
        }

        // joined but not settled: escalate, then acknowledge on chain
        if p.settled.is_none() {
            if !p.chat_sent && ctx.tick > p.announced_at.unwrap() + 4 * delta + 2 {
                self.chat(ctx, i, "no settlement");
                return;
            }
            if record.is_some() && !p.ack_on_chain && height + 1 < proposal.h_neg {
                if let Some(sealed) = p.ack.clone() {
                    self.plans[i].ack_on_chain = true;
                    ctx.submit(Transaction::new(&self.account, TxPayload::Acknowledge { id_p, ack: sealed.ct }));
                }
            }
            return;
        }

        // settled: wait for the output commitment
        if p.cmt.is_none() && !p.chat_sent {
            let ns = apps::namespace_of(&ctx.scenario.proposals[p.index].app).unwrap_or_default();
            if ctx.chain.executor().locked_by(ns).is_some() {
                return;
            }
            let stable = self.ns_changed.get(ns).map_or(0, |t| t + k * b);
            let deadline = p.settled_at.unwrap().max(stable) + 3 * delta + 2 + 2 * b;
            if ctx.tick > deadline {
                self.chat(ctx, i, "no output commitment");
            }
        }
    }
}

fn find_cmt(ctx: &Ctx<'_>, id_p: &Digest) -> Option<Transaction> {
    ctx.chain.blocks().iter().flat_map(|b| b.entries()).find_map(|(tx, r)| {
        (r.ok && matches!(tx.payload, TxPayload::Commit { .. }) && tx.payload.proposal_id().as_ref() == Some(id_p))
            .then(|| tx.clone())
    })
}
