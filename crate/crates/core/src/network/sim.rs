//! Tick-driven discrete-event simulation of the parties, the executors and the chain.
//!
//! Each tick delivers due messages, lets every actor act, and every `block_ticks`
//! ticks mines a block. Messages between actors take a seeded delay in `[1, delta]`;
//! byzantine actors may drop or stretch their own traffic.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use super::executor::ExecutorActor;
use super::msg::Msg;
use super::party::PartyActor;
use super::scenario::{Behavior, Role, Scenario};
use super::trace::{Event, Trace};
use crate::apps::{self, Value};
use crate::chain::{Block, Chain, ChainConfig, Transaction, TxPayload};
use crate::contract::{Contract, ContractConfig};
use crate::crypto::{
    commit_private, derive_shared, hash_parts, Account, Address, Digest, Encoder,
    KeyGenerator, PublicKey,
};
use crate::enclave::{Enclave, EnclaveConfig, DEFAULT_KAPPA};
use crate::protocol::ProposalStatus;

/// Public facts every actor knows.
#[derive(Clone, Debug)]
pub struct Directory {
    pub names: Vec<String>,
    pub roles: Vec<Role>,
    pub addresses: Vec<Address>,
    pub by_address: BTreeMap<Address, usize>,
    /// Executor actor indices in enclave-list order; the first is the specified enclave.
    pub executors: Vec<usize>,
    pub parties: Vec<usize>,
    pub tees: Vec<Address>,
    pub network_pk: PublicKey,
    pub delta: u64,
    pub block_ticks: u64,
    pub finality_depth: u64,
    pub tau_resp: u64,
}

impl Directory {
    pub fn name_of(&self, a: &Address) -> String {
        self.by_address.get(a).map_or_else(|| a.to_hex(), |&i| self.names[i].clone())
    }
}

pub(crate) enum Action {
    Send { to: usize, msg: Msg, id_p: Option<Digest>, delay: Option<u64> },
    Submit(Transaction),
}

/// What an actor sees and may do during one step.
pub(crate) struct Ctx<'a> {
    pub tick: u64,
    pub chain: &'a Chain<Contract>,
    pub dir: &'a Directory,
    pub scenario: &'a Scenario,
    actions: Vec<Action>,
    events: Vec<(String, String, String, serde_json::Value)>,
    proposals: Vec<(Digest, usize)>,
}

impl<'a> Ctx<'a> {
    pub fn send(&mut self, to: usize, msg: Msg, id_p: Option<Digest>) {
        self.actions.push(Action::Send { to, msg, id_p, delay: None });
    }

    pub fn send_after(&mut self, to: usize, msg: Msg, id_p: Option<Digest>, delay: u64) {
        self.actions.push(Action::Send { to, msg, id_p, delay: Some(delay) });
    }

    pub fn submit(&mut self, tx: Transaction) {
        self.actions.push(Action::Submit(tx));
    }

    pub fn log(&mut self, kind: &str, digest: Option<&Digest>, note: impl Into<String>, data: serde_json::Value) {
        self.events.push((kind.to_string(), digest.map(Digest::to_hex).unwrap_or_default(), note.into(), data));
    }

    pub fn register_proposal(&mut self, id_p: Digest, index: usize) {
        self.proposals.push((id_p, index));
    }

    /// Is a transaction of this kind for `id_p` waiting in the mempool?
    pub fn pending(&self, id_p: &Digest, matches: impl Fn(&TxPayload) -> bool) -> bool {
        self.chain.pending_txs().any(|tx| tx.payload.proposal_id().as_ref() == Some(id_p) && matches(&tx.payload))
    }
}

pub(crate) enum ActorKind {
    Party(Box<PartyActor>),
    Executor(Box<ExecutorActor>),
}

struct Actor {
    behavior: Behavior,
    kind: ActorKind,
}

struct Envelope {
    from: usize,
    to: usize,
    msg: Msg,
    id_p: Option<Digest>,
}

/// Everything a finished run leaves behind.
pub struct RunResult {
    pub trace: Trace,
    pub chain: Chain<Contract>,
    pub directory: Directory,
    /// What a network observer sees: the shape of every message and transaction, with timing.
    pub adversary_view: Vec<Vec<u8>>,
    pub ticks: u64,
}

impl RunResult {
    pub fn blocks(&self) -> &[Block] {
        self.chain.blocks()
    }

    pub fn status_of(&self, index: usize) -> Option<ProposalStatus> {
        self.trace
            .of_kind("end")
            .next()?
            .data
            .get("statuses")?
            .get(index)?
            .as_str()
            .and_then(ProposalStatus::parse)
    }
}

pub fn actor_seed(scenario: &Scenario, name: &str) -> u64 {
    let d = hash_parts(&[b"decloak/actor-rng", &scenario.seed.to_be_bytes(), name.as_bytes()]);
    u64::from_be_bytes(d.0[..8].try_into().unwrap())
}

/// Seed of the one-time keys behind the genesis state commitments.
pub fn genesis_keygen_seed(seed: u64) -> u64 {
    seed ^ 0x6765_6e65_7369_7300
}

/// Contract with every known function registered and the scenario's initial state installed.
pub fn genesis_contract(scenario: &Scenario, tees: Vec<Address>) -> Contract {
    let functions = apps::APP_NAMES
        .iter()
        .map(|n| {
            let a = apps::app(n, 1).unwrap();
            (a.f_hash(), a.namespace.to_string())
        })
        .collect();
    let sink = scenario.contract.sink.clone();
    let mut contract = Contract::new(ContractConfig { tees, tau_resp: scenario.contract.tau_resp, sink, functions });
    let net = scenario.network_account();
    let mut keygen = KeyGenerator::new(genesis_keygen_seed(scenario.seed), DEFAULT_KAPPA).expect("kappa");
    for (ns, entries) in &scenario.state {
        for name in entries.keys() {
            let acct = scenario.account(name);
            let value: Value = scenario.initial_state(ns, name).expect("validated");
            let shared = derive_shared(&acct.sk, &net.pk).expect("valid key");
            let c = commit_private(&value.to_bytes(), &keygen.next_key(), &shared, &acct.ad);
            contract.install_state(ns, c);
        }
    }
    contract
}

pub struct Sim {
    scenario: Scenario,
    dir: Directory,
    chain: Chain<Contract>,
    actors: Vec<Actor>,
    queue: BTreeMap<(u64, u64), Envelope>,
    seq: u64,
    rng: ChaCha8Rng,
    events: Vec<Event>,
    view: Vec<Vec<u8>>,
    ids: BTreeMap<Digest, usize>,
    statuses: BTreeMap<Digest, ProposalStatus>,
    tick: u64,
}

impl Sim {
    /// The scenario must already be validated.
    pub fn new(scenario: Scenario) -> Sim {
        let accounts: Vec<Account> = scenario.actors.iter().map(|a| scenario.account(&a.name)).collect();
        let net = scenario.network_account();
        let executors = scenario.executors();
        let tees: Vec<Address> = executors.iter().map(|&i| accounts[i].ad.clone()).collect();
        let dir = Directory {
            names: scenario.actors.iter().map(|a| a.name.clone()).collect(),
            roles: scenario.actors.iter().map(|a| a.role).collect(),
            addresses: accounts.iter().map(|a| a.ad.clone()).collect(),
            by_address: accounts.iter().enumerate().map(|(i, a)| (a.ad.clone(), i)).collect(),
            executors: executors.clone(),
            parties: scenario.parties(),
            tees: tees.clone(),
            network_pk: net.pk,
            delta: scenario.network.delta,
            block_ticks: scenario.chain.block_ticks,
            finality_depth: scenario.chain.finality_depth,
            tau_resp: scenario.contract.tau_resp,
        };
        let chain = Chain::new(
            genesis_contract(&scenario, tees.clone()),
            ChainConfig { finality_depth: scenario.chain.finality_depth, address_width: scenario.chain.address_width },
        );
        let genesis = chain.checkpoint(0).expect("genesis");

        let mut actors = Vec::new();
        for (i, spec) in scenario.actors.iter().enumerate() {
            let kind = match spec.role {
                Role::Party => ActorKind::Party(Box::new(PartyActor::new(
                    i,
                    accounts[i].clone(),
                    spec.behavior.clone(),
                    &scenario,
                    actor_seed(&scenario, &spec.name),
                ))),
                Role::Executor => {
                    let config = EnclaveConfig {
                        finality_depth: scenario.chain.finality_depth,
                        address_width: scenario.chain.address_width,
                        tau_resp: scenario.contract.tau_resp,
                        kappa: DEFAULT_KAPPA,
                        keygen_seed: actor_seed(&scenario, &spec.name),
                    };
                    let mut enclave = Enclave::new(accounts[i].clone(), config).expect("kappa");
                    enclave.provision_network(net.clone());
                    enclave.set_tees(tees.clone());
                    for name in apps::APP_NAMES {
                        for p in &scenario.proposals {
                            if p.app == name {
                                enclave.install_app(apps::app(name, p.settlement.min_parties).unwrap());
                            }
                        }
                    }
                    enclave.trust_checkpoint(genesis);
                    ActorKind::Executor(Box::new(ExecutorActor::new(i, enclave, spec.behavior.clone())))
                }
            };
            actors.push(Actor { behavior: spec.behavior.clone(), kind });
        }

        let rng = ChaCha8Rng::seed_from_u64(scenario.seed);
        let mut sim = Sim {
            scenario,
            dir,
            chain,
            actors,
            queue: BTreeMap::new(),
            seq: 0,
            rng,
            events: Vec::new(),
            view: Vec::new(),
            ids: BTreeMap::new(),
            statuses: BTreeMap::new(),
            tick: 0,
        };
        sim.log_config();
        sim
    }

    fn push(&mut self, kind: &str, actor: &str, digest: String, note: String, data: serde_json::Value) {
        self.events.push(Event {
            tick: self.tick,
            height: self.chain.height(),
            kind: kind.to_string(),
            actor: actor.to_string(),
            digest,
            note,
            data,
        });
    }

    fn log_config(&mut self) {
        let actors: Vec<serde_json::Value> = self
            .scenario
            .actors
            .iter()
            .zip(&self.dir.addresses)
            .map(|(a, ad)| json!({"name": a.name, "role": a.role, "behavior": a.behavior, "address": ad}))
            .collect();
        let data = json!({
            "scenario": self.scenario,
            "actors": actors,
            "network_pk": hex::encode(self.dir.network_pk.to_bytes()),
        });
        let name = self.scenario.name.clone();
        self.push("config", "sim", String::new(), name, data);
    }

    fn balances_json(&self) -> serde_json::Value {
        let c = self.chain.executor();
        let mut m = serde_json::Map::new();
        for (i, name) in self.dir.names.iter().enumerate() {
            m.insert(name.clone(), json!(c.balance(&self.dir.addresses[i])));
        }
        json!({"balances": m, "burned": c.burned()})
    }

    fn schedule(&mut self, from: usize, to: usize, msg: Msg, id_p: Option<Digest>, delay: Option<u64>) {
        let (dropped, extra) = self.fuzz(from);
        if dropped {
            self.push("drop", &self.dir.names[from].clone(), hex_id(&id_p), msg.kind().into(), json!({"to": self.dir.names[to]}));
            return;
        }
        let delay = delay.unwrap_or_else(|| self.rng.gen_range(1..=self.dir.delta)).max(1) + extra;
        let at = self.tick + delay;
        let mut enc = Encoder::shape();
        enc.put_u64(self.tick).put_u64(from as u64).put_u64(to as u64).put(&msg);
        self.view.push(enc.finish());
        let data = json!({"to": self.dir.names[to], "msg": msg.kind(), "deliver_at": at});
        let digest = hex_id(&id_p);
        let note = crate::crypto::hash(&msg).short();
        self.push("send", &self.dir.names[from].clone(), digest, note, data);
        self.queue.insert((at, self.seq), Envelope { from, to, msg, id_p });
        self.seq += 1;
    }

    fn fuzz(&mut self, from: usize) -> (bool, u64) {
        match self.actors[from].behavior {
            Behavior::Fuzz { drop_per_mille, max_delay } => {
                let dropped = self.rng.gen_range(0..1000) < drop_per_mille;
                (dropped, self.rng.gen_range(0..=max_delay))
            }
            _ => (false, 0),
        }
    }

    fn apply(&mut self, from: usize, ctx_actions: Vec<Action>, events: Vec<(String, String, String, serde_json::Value)>, proposals: Vec<(Digest, usize)>) {
        let name = self.dir.names[from].clone();
        for (id, idx) in proposals {
            self.ids.insert(id, idx);
        }
        for (kind, digest, note, data) in events {
            self.push(&kind, &name, digest, note, data);
        }
        for a in ctx_actions {
            match a {
                Action::Send { to, msg, id_p, delay } => self.schedule(from, to, msg, id_p, delay),
                Action::Submit(tx) => {
                    // Setup always lands: an actor without collateral has nothing at stake.
                    if tx.payload.proposal_id().is_some() && self.fuzz(from).0 {
                        self.push("drop", &name, hex_id(&tx.payload.proposal_id()), tx.kind().as_str().into(), json!(null));
                        continue;
                    }
                    let id = tx.id();
                    let mut enc = Encoder::shape();
                    enc.put_u64(self.tick).put(&tx);
                    self.view.push(enc.finish());
                    let outcome = self.chain.submit_tx(tx.clone(), self.tick);
                    let data = json!({"tx": id.to_hex(), "accepted": outcome.accepted()});
                    self.push("submit", &name, hex_id(&tx.payload.proposal_id()), tx.kind().as_str().into(), data);
                }
            }
        }
    }

    fn step_actor(&mut self, i: usize, delivery: Option<Envelope>) {
        let mut ctx = Ctx {
            tick: self.tick,
            chain: &self.chain,
            dir: &self.dir,
            scenario: &self.scenario,
            actions: Vec::new(),
            events: Vec::new(),
            proposals: Vec::new(),
        };
        match (&mut self.actors[i].kind, delivery) {
            (ActorKind::Party(p), Some(env)) => p.on_message(&mut ctx, env.from, env.msg),
            (ActorKind::Executor(e), Some(env)) => e.on_message(&mut ctx, env.from, env.msg),
            (ActorKind::Party(p), None) => p.on_tick(&mut ctx),
            (ActorKind::Executor(e), None) => e.on_tick(&mut ctx),
        }
        let Ctx { actions, events, proposals, .. } = ctx;
        self.apply(i, actions, events, proposals);
    }

    fn mine(&mut self) {
        let block = self.chain.mine_block().clone();
        let mut enc = Encoder::shape();
        enc.put_u64(self.tick).put_seq(&block.txs).put_seq(&block.receipts);
        self.view.push(enc.finish());
        let mut txs = Vec::new();
        for (tx, r) in block.entries() {
            let pid = tx.payload.proposal_id();
            if let (Some(id), TxPayload::ChallengeTee { proposal } | TxPayload::Commit { proposal, .. }) = (pid, &tx.payload) {
                self.ids.entry(id).or_insert(proposal.nonce as usize);
            }
            txs.push(json!({
                "id": r.tx_id.to_hex(),
                "kind": tx.kind().as_str(),
                "sender": self.dir.name_of(&tx.sender),
                "proposal": pid.map(|d| d.to_hex()),
                "ok": r.ok,
                "reason": r.reason,
            }));
        }
        self.push("block", "chain", block.digest().to_hex(), String::new(), json!({"txs": txs}));

        let records: Vec<(Digest, ProposalStatus)> =
            self.chain.executor().records().map(|r| (r.id_p, r.sta)).collect();
        for (id, sta) in records {
            let prev = self.statuses.insert(id, sta);
            if prev != Some(sta) {
                let from = prev.map_or("NONE", |s| s.as_str());
                let index = self.ids.get(&id).copied();
                let punished: Vec<String> = self
                    .chain
                    .executor()
                    .record(&id)
                    .map(|r| r.punished.iter().map(|a| self.dir.name_of(a)).collect())
                    .unwrap_or_default();
                let data = json!({"from": from, "to": sta.as_str(), "index": index, "punished": punished});
                self.push("status", "chain", id.to_hex(), String::new(), data);
            }
        }
        if block.height() == 1 {
            let data = self.balances_json();
            self.push("balances", "chain", String::new(), "initial".into(), data);
        }
    }

    fn setup(&mut self) {
        for i in 0..self.actors.len() {
            let acct = self.scenario.account(&self.dir.names[i]);
            let deposit = self.scenario.deposit_of(&self.scenario.actors[i]);
            let mut actions = vec![Action::Submit(Transaction::new(&acct, TxPayload::Register { pk: acct.pk }))];
            if deposit > 0 {
                actions.push(Action::Submit(Transaction::new(&acct, TxPayload::Deposit { amount: deposit })));
            }
            self.apply(i, actions, Vec::new(), Vec::new());
        }
    }

    fn all_settled(&self) -> bool {
        let n = self.scenario.proposals.len();
        let terminal: Vec<usize> = self
            .statuses
            .iter()
            .filter(|(_, s)| s.is_terminal())
            .filter_map(|(id, _)| self.ids.get(id).copied())
            .collect();
        (0..n).all(|i| terminal.contains(&i)) && self.queue.is_empty()
    }

    pub fn run(mut self) -> RunResult {
        let budget = self.scenario.budget();
        let b = self.dir.block_ticks;
        let mut settled_at: Option<u64> = None;
        self.setup();
        while self.tick < budget {
            let due: Vec<(u64, u64)> = self.queue.range(..=(self.tick, u64::MAX)).map(|(k, _)| *k).collect();
            for key in due {
                let env = self.queue.remove(&key).unwrap();
                let data = json!({"from": self.dir.names[env.from], "msg": env.msg.kind()});
                let (to, digest) = (self.dir.names[env.to].clone(), hex_id(&env.id_p));
                self.push("deliver", &to, digest, String::new(), data);
                let i = env.to;
                self.step_actor(i, Some(env));
            }
            for i in 0..self.actors.len() {
                self.step_actor(i, None);
            }
            if self.tick % b == b - 1 {
                self.mine();
            }
            if self.all_settled() {
                let since = *settled_at.get_or_insert(self.tick);
                if self.tick >= since + 2 * b {
                    break;
                }
            } else {
                settled_at = None;
            }
            self.tick += 1;
        }
        let statuses: Vec<&str> = (0..self.scenario.proposals.len())
            .map(|i| {
                self.statuses
                    .iter()
                    .find(|(id, _)| self.ids.get(*id) == Some(&i))
                    .map_or("NONE", |(_, s)| s.as_str())
            })
            .collect();
        let mut data = self.balances_json();
        data["statuses"] = json!(statuses);
        self.push("end", "sim", String::new(), String::new(), data);
        RunResult {
            trace: Trace { events: self.events },
            chain: self.chain,
            directory: self.dir,
            adversary_view: self.view,
            ticks: self.tick,
        }
    }
}

fn hex_id(id: &Option<Digest>) -> String {
    id.map(|d| d.to_hex()).unwrap_or_default()
}

/// Builds and runs a validated scenario.
pub fn run(scenario: &Scenario) -> RunResult {
    Sim::new(scenario.clone()).run()
}
