use std::collections::BTreeMap;

use decloak::apps::{app, App, Value};
use decloak::chain::{Chain, ChainConfig, PoP, Transaction, TxPayload};
use decloak::contract::{Contract, ContractConfig, PunishmentSink};
use decloak::crypto::{derive_shared, hash, keygen_account, open_commitment, Account, SymmetricKey};
use decloak::enclave::{
    build_snapshot, input_commitment, seal_ack, seal_input, Ack, Enclave, EnclaveConfig,
    EnclaveError, EnclaveStatus, ExecuteOutcome, InputSubmission, PunishOutcome, Sealed,
};
use decloak::protocol::{Proposal, ProposalStatus};

const K: u64 = 6;

struct World {
    chain: Chain<Contract>,
    e0: Enclave,
    e1: Enclave,
    net: Account,
    parties: Vec<Account>,
    app: App,
    tick: u64,
}

fn world(min_parties: usize) -> World {
    let tee0 = keygen_account(b"tee0");
    let tee1 = keygen_account(b"tee1");
    let net = keygen_account(b"network");
    let mut parties: Vec<Account> = (0..3).map(|i| keygen_account(format!("party{i}").as_bytes())).collect();
    parties.sort_by(|a, b| a.ad.cmp(&b.ad));
    let scores = app("scores_mean", min_parties).unwrap();
    let tees = vec![tee0.ad.clone(), tee1.ad.clone()];
    let contract = Contract::new(ContractConfig {
        tees: tees.clone(),
        tau_resp: 10,
        sink: PunishmentSink::Burn,
        functions: BTreeMap::from([(scores.f_hash(), scores.namespace.to_string())]),
    });
    let mut chain = Chain::new(contract, ChainConfig { finality_depth: K, address_width: 20 });
    for a in [&tee0, &tee1].into_iter().chain(&parties) {
        chain.submit_tx(Transaction::new(a, TxPayload::Register { pk: a.pk }), 0);
        chain.submit_tx(Transaction::new(a, TxPayload::Deposit { amount: 100 }), 0);
    }
    chain.mine_block();
    let mk = |acc: Account, seed: u64| {
        let mut e = Enclave::new(acc, EnclaveConfig { keygen_seed: seed, ..EnclaveConfig::default() }).unwrap();
        e.provision_network(net.clone());
        e.set_tees(tees.clone());
        e.install_app(app("scores_mean", min_parties).unwrap());
        e.trust_checkpoint(chain.checkpoint(0).unwrap());
        e.sync_coins(chain.executor().balances().clone());
        e
    };
    let e0 = mk(tee0, 1);
    let e1 = mk(tee1, 2);
    World { chain, e0, e1, net, parties, app: scores, tick: 1 }
}

impl World {
    fn proposal(&self, q: u64) -> Proposal {
        Proposal {
            f_hash: self.app.f_hash(),
            p_hash: self.app.p_hash(),
            q,
            h_neg: self.chain.height() + 5,
            tau_com: 40,
            nonce: 0,
        }
    }

    fn submit(&mut self, tx: &Transaction) {
        self.tick += 1;
        assert!(self.chain.submit_tx(tx.clone(), self.tick).accepted());
    }

    fn mine(&mut self, n: u64) {
        for _ in 0..n {
            self.chain.mine_block();
        }
    }

    fn ack(&self, i: usize, id_p: decloak::crypto::Digest, join: bool) -> Sealed {
        let p = &self.parties[i];
        seal_ack(p, &self.net.pk, &Ack { id_p, party: p.ad.clone(), join })
    }

    fn input(&self, i: usize, id_p: decloak::crypto::Digest, score: u64, lie: Option<u64>) -> Sealed {
        let p = &self.parties[i];
        let shared = derive_shared(&p.sk, &self.net.pk).unwrap();
        let k_x = SymmetricKey::from_bytes([i as u8 + 10; 32]);
        let pledged = Value::record([("score", Value::Uint(score))]);
        let pledge = hash(&input_commitment(&pledged, &k_x, &shared, &p.ad));
        let sent = Value::record([("score", Value::Uint(lie.unwrap_or(score)))]);
        seal_input(p, &self.net.pk, &InputSubmission { id_p, party: p.ad.clone(), x: sent, k_x, pledge })
    }

    fn negotiated(&mut self, q: u64) -> Proposal {
        let p = self.proposal(q);
        let id = p.id();
        self.e0.generate_id_p(p.clone()).unwrap();
        let acks: Vec<Sealed> = (0..3).map(|i| self.ack(i, id, true)).collect();
        self.e0.negotiate(&id, &acks).unwrap();
        p
    }

    fn confirm(&mut self, tx: &Transaction) -> PoP {
        self.submit(tx);
        self.mine(K);
        self.chain.pop_between(&tx.id(), 0, 0).unwrap()
    }

    fn snapshot(&mut self) -> decloak::enclave::StateSnapshot {
        if self.chain.confirmed_height() == 0 {
            self.mine(K);
        }
        build_snapshot(&self.chain, "scores", 0).unwrap()
    }
}

#[test]
fn only_the_specified_enclave_opens_proposals() {
    let mut w = world(3);
    let p = w.proposal(10);
    let a = w.e0.generate_id_p(p.clone()).unwrap();
    assert_eq!(a.body.id_p, p.id());
    assert!(a.verify(&w.net.pk));
    assert_eq!(w.e0.generate_id_p(p.clone()).unwrap().body.id_p, a.body.id_p);
    assert_eq!(w.e1.generate_id_p(p).unwrap_err(), EnclaveError::NotSpecified);
}

#[test]
fn negotiation_settles_and_is_idempotent() {
    let mut w = world(3);
    let p = w.proposal(10);
    let id = p.id();
    w.e0.generate_id_p(p).unwrap();
    let acks: Vec<Sealed> = (0..3).map(|i| w.ack(i, id, true)).collect();
    let s1 = w.e0.negotiate(&id, &acks).unwrap();
    assert!(s1.verify(&w.net.pk));
    let expected: Vec<_> = w.parties.iter().map(|p| p.ad.clone()).collect();
    assert_eq!(s1.body.settled.parties, expected);
    assert_eq!(w.e0.cached_coins(&w.parties[0].ad), 90);
    assert_eq!(w.e0.cached_coins(w.e0.address()), 90);
    let s2 = w.e0.negotiate(&id, &[]).unwrap();
    assert_eq!(s1, s2);
    assert_eq!(w.e0.cached_coins(&w.parties[0].ad), 90);
}

#[test]
fn negotiation_aborts_without_state_change() {
    let mut w = world(3);
    let p = w.proposal(150);
    let id = p.id();
    w.e0.generate_id_p(p).unwrap();
    let acks: Vec<Sealed> = (0..3).map(|i| w.ack(i, id, true)).collect();
    assert!(matches!(w.e0.negotiate(&id, &acks), Err(EnclaveError::InsufficientCoins(_))));
    assert_eq!(w.e0.status(&id), EnclaveStatus::Empty);
    assert_eq!(w.e0.cached_coins(&w.parties[0].ad), 100);

    // two acks from the same party count once
    let mut w = world(2);
    let p = w.proposal(10);
    let id = p.id();
    w.e0.generate_id_p(p).unwrap();
    let dup = [w.ack(0, id, true), w.ack(0, id, true)];
    assert_eq!(w.e0.negotiate(&id, &dup).unwrap_err(), EnclaveError::ConformFailed);
    // an ack for another proposal is ignored
    let stray = w.ack(1, decloak::crypto::hash_bytes(b"other"), true);
    assert_eq!(w.e0.negotiate(&id, &[stray]).unwrap_err(), EnclaveError::ConformFailed);
    assert!(w.e0.negotiate(&id, &[w.ack(1, id, true)]).is_ok());
}

#[test]
fn optimistic_path_delivers_keys_through_any_enclave() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = [90, 80, 70].iter().enumerate().map(|(i, s)| w.input(i, id, *s, None)).collect();
    let snap = w.snapshot();
    assert_eq!(w.e0.execute(&id, &inputs, &snap).unwrap(), ExecuteOutcome::Executed);
    assert_eq!(w.e0.status(&id), EnclaveStatus::Executed);
    let cmt = w.e0.commit(&id).unwrap();
    assert_eq!(w.e0.commit(&id).unwrap(), cmt);
    let TxPayload::Commit { new_states, returns, .. } = &cmt.payload else { panic!() };
    assert!(new_states.iter().chain(returns).all(|c| c.key_ct.is_none()));
    // the other enclave cannot commit
    assert_eq!(w.e1.commit(&id).unwrap_err(), EnclaveError::NotSpecified);

    let pop = w.confirm(&cmt);
    assert!(w.chain.locate(&cmt.id()).unwrap().2.ok);
    let com0 = w.e0.complete(&cmt, &pop).unwrap();
    let com1 = w.e1.complete(&cmt, &pop).unwrap();
    assert_eq!(com0.payload, com1.payload);
    assert_eq!(w.e1.status(&id), EnclaveStatus::Completed);
    assert_eq!(w.e0.complete(&cmt, &pop).unwrap(), com0);
    assert_eq!(w.e0.cached_coins(&w.parties[0].ad), 100);

    w.submit(&com1);
    w.mine(1);
    let c = w.chain.executor();
    assert_eq!(c.record(&id).unwrap().sta, ProposalStatus::Completed);
    let out = c.record(&id).unwrap().output.clone().unwrap();
    for (i, party) in w.parties.iter().enumerate() {
        let r = open_commitment(&party.sk, &w.net.pk, &out.returns[i]).unwrap();
        assert_eq!(Value::from_bytes(&r).unwrap().field("mean"), Some(&Value::Uint(80)));
    }
    assert_eq!(c.commitments("scores").len(), 3);
}

#[test]
fn forged_or_short_proofs_release_nothing() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = (0..3).map(|i| w.input(i, id, 50, None)).collect();
    let snap = w.snapshot();
    w.e0.execute(&id, &inputs, &snap).unwrap();
    let cmt = w.e0.commit(&id).unwrap();
    w.submit(&cmt);
    w.mine(K - 1);
    assert!(w.chain.pop_between(&cmt.id(), 0, 0).is_err());
    w.mine(1);
    let pop = w.chain.pop_between(&cmt.id(), 0, 0).unwrap();
    // linked to a checkpoint the enclave does not hold
    let unlinked = w.chain.get_pop(&cmt.id()).unwrap();
    assert_eq!(w.e1.complete(&cmt, &unlinked).unwrap_err(), EnclaveError::BadPoP);

    let mut short = pop.clone();
    short.blocks.pop();
    assert_eq!(w.e1.complete(&cmt, &short).unwrap_err(), EnclaveError::BadPoP);
    let mut tampered = pop.clone();
    for r in &mut tampered.blocks[0].receipts {
        r.reason = Some("forged".into());
    }
    assert_eq!(w.e1.complete(&cmt, &tampered).unwrap_err(), EnclaveError::BadPoP);
    // a proof for a transaction that was never mined is not accepted either
    let mut other = cmt.clone();
    if let TxPayload::Commit { proposal, .. } = &mut other.payload {
        proposal.nonce = 99;
    }
    assert_eq!(w.e1.complete(&other, &pop).unwrap_err(), EnclaveError::BadPoP);
    assert_eq!(w.e1.status(&id), EnclaveStatus::Empty);
    assert!(w.e1.complete(&cmt, &pop).is_ok());
}

#[test]
fn silent_party_is_challenged_then_punished() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = (0..2).map(|i| w.input(i, id, 60, None)).collect();
    let snap = w.snapshot();
    let out = w.e0.execute(&id, &inputs, &snap).unwrap();
    let silent = w.parties[2].ad.clone();
    assert_eq!(out, ExecuteOutcome::Suspicious(vec![silent.clone()]));
    assert_eq!(w.e0.challenge_parties(&id, &[]).unwrap_err(), EnclaveError::EmptyChallenge);
    let chap = w.e0.challenge_parties(&id, &[silent.clone()]).unwrap();
    // a chaP needs a record: this one has none yet, so the call fails on chain
    w.submit(&Transaction::new(&w.parties[0], TxPayload::ChallengeTee { proposal: p.clone() }));
    w.mine(1);
    let pop = w.confirm(&chap);
    let deadline = p.response_deadline(10);
    assert_eq!(w.e0.punish_parties(&chap, &pop).unwrap_err(), EnclaveError::TooEarly);
    while w.chain.height() < deadline + K - 1 {
        w.mine(1);
    }
    let pop = w.chain.pop_between(&chap.id(), 0, deadline + K - 1).unwrap();
    let PunishOutcome::Punish(pns) = w.e0.punish_parties(&chap, &pop).unwrap() else { panic!() };
    assert_eq!(pns.payload, TxPayload::PunishParties { id_p: id, guilty: vec![silent.clone()] });
    assert_eq!(w.e0.cached_coins(&w.parties[0].ad), 100);
    assert_eq!(w.e0.cached_coins(&silent), 90);
    w.submit(&pns);
    w.mine(1);
    let c = w.chain.executor();
    assert_eq!(c.record(&id).unwrap().sta, ProposalStatus::Aborted);
    assert_eq!(c.balance(&silent), 90);
}

#[test]
fn on_time_response_resumes_execution() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = (0..2).map(|i| w.input(i, id, 60, None)).collect();
    let snap = w.snapshot();
    w.e0.execute(&id, &inputs, &snap).unwrap();
    w.submit(&Transaction::new(&w.parties[0], TxPayload::ChallengeTee { proposal: p.clone() }));
    w.mine(1);
    let chap = w.e0.challenge_parties(&id, &[w.parties[2].ad.clone()]).unwrap();
    w.submit(&chap);
    w.mine(1);
    let response = w.input(2, id, 30, None);
    w.submit(&Transaction::new(&w.parties[2], TxPayload::PartyResponse { id_p: id, response: response.ct }));
    let deadline = p.response_deadline(10);
    while w.chain.height() < deadline + K - 1 {
        w.mine(1);
    }
    let pop = w.chain.pop_between(&chap.id(), 0, deadline + K - 1).unwrap();
    assert_eq!(w.e0.punish_parties(&chap, &pop).unwrap(), PunishOutcome::Resume);
    let snap = build_snapshot(&w.chain, "scores", 0).unwrap();
    assert_eq!(w.e0.execute(&id, &[], &snap).unwrap(), ExecuteOutcome::Executed);
}

#[test]
fn challenge_without_a_response_window_punishes_nobody() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = (0..2).map(|i| w.input(i, id, 60, None)).collect();
    let snap = w.snapshot();
    w.e0.execute(&id, &inputs, &snap).unwrap();
    w.submit(&Transaction::new(&w.parties[0], TxPayload::ChallengeTee { proposal: p.clone() }));
    let deadline = p.response_deadline(10);
    while w.chain.height() < deadline - 2 {
        w.mine(1);
    }
    // mined in the last block before the deadline: nobody can answer in time
    let chap = w.e0.challenge_parties(&id, &[w.parties[2].ad.clone()]).unwrap();
    w.submit(&chap);
    w.mine(K + 1);
    let pop = w.chain.pop_between(&chap.id(), 0, w.chain.height()).unwrap();
    assert_eq!(pop.inclusion_height(), Some(deadline - 1));
    assert_eq!(w.e0.punish_parties(&chap, &pop).unwrap_err(), EnclaveError::ChallengeTooLate);
}

#[test]
fn late_or_mismatched_responses_count_as_absent() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    // party 1 sends a value other than the one it pledged
    let inputs = vec![w.input(0, id, 60, None), w.input(1, id, 60, Some(61)), w.input(2, id, 60, None)];
    let snap = w.snapshot();
    let liar = w.parties[1].ad.clone();
    assert_eq!(w.e0.execute(&id, &inputs, &snap).unwrap(), ExecuteOutcome::Suspicious(vec![liar.clone()]));
    w.submit(&Transaction::new(&w.parties[0], TxPayload::ChallengeTee { proposal: p.clone() }));
    w.mine(1);
    let chap = w.e0.challenge_parties(&id, &[liar.clone()]).unwrap();
    w.submit(&chap);
    let deadline = p.response_deadline(10);
    while w.chain.height() < deadline - 1 {
        w.mine(1);
    }
    // lands exactly at the deadline height
    let response = w.input(1, id, 60, None);
    w.submit(&Transaction::new(&w.parties[1], TxPayload::PartyResponse { id_p: id, response: response.ct }));
    w.mine(K);
    assert!(!w.chain.locate(&Transaction::new(&w.parties[1], TxPayload::PartyResponse { id_p: id, response: w.input(1, id, 60, None).ct }).id()).unwrap().2.ok);
    let pop = w.chain.pop_between(&chap.id(), 0, deadline + K - 1).unwrap();
    let PunishOutcome::Punish(pns) = w.e0.punish_parties(&chap, &pop).unwrap() else { panic!() };
    assert_eq!(pns.payload, TxPayload::PunishParties { id_p: id, guilty: vec![liar] });
}

#[test]
fn failed_negotiation_needs_a_late_enough_proof() {
    let mut w = world(2);
    let p = w.proposal(10);
    let id = p.id();
    let chat = Transaction::new(&w.parties[0], TxPayload::ChallengeTee { proposal: p.clone() });
    let pop = w.confirm(&chat);
    assert!(pop.confirmed_height(K).unwrap() <= p.h_neg);
    assert_eq!(w.e0.fail_negotiation(&chat, &pop).unwrap_err(), EnclaveError::TooEarly);
    w.mine(p.h_neg);
    let pop = w.chain.pop_between(&chat.id(), 0, w.chain.height()).unwrap();
    assert_eq!(w.e1.fail_negotiation(&chat, &pop).unwrap_err(), EnclaveError::NotSpecified);
    let fneg = w.e0.fail_negotiation(&chat, &pop).unwrap();
    assert_eq!(fneg.payload, TxPayload::FailNegotiation { id_p: id });
    w.submit(&fneg);
    w.mine(1);
    assert_eq!(w.chain.executor().record(&id).unwrap().sta, ProposalStatus::NegoFailed);
}

#[test]
fn off_chain_ack_wins_over_on_chain_ack() {
    let mut w = world(2);
    let p = w.proposal(10);
    let id = p.id();
    w.e0.generate_id_p(p.clone()).unwrap();
    // party 0 declined off-chain; party 1 joined off-chain
    let off = [w.ack(0, id, false), w.ack(1, id, true)];
    assert_eq!(w.e0.negotiate(&id, &off).unwrap_err(), EnclaveError::ConformFailed);
    let chat = Transaction::new(&w.parties[1], TxPayload::ChallengeTee { proposal: p.clone() });
    w.submit(&chat);
    w.mine(1);
    // party 0 then says yes on chain
    let on = w.ack(0, id, true);
    w.submit(&Transaction::new(&w.parties[0], TxPayload::Acknowledge { id_p: id, ack: on.ct }));
    w.mine(p.h_neg + K);
    let pop = w.chain.pop_between(&chat.id(), 0, w.chain.height()).unwrap();
    assert!(w.e0.fail_negotiation(&chat, &pop).is_ok());

    // without the off-chain refusal the on-chain ack is enough to settle
    let mut w = world(2);
    let p = w.proposal(10);
    let id = p.id();
    w.e0.generate_id_p(p.clone()).unwrap();
    let _ = w.e0.negotiate(&id, &[w.ack(1, id, true)]);
    let chat = Transaction::new(&w.parties[1], TxPayload::ChallengeTee { proposal: p.clone() });
    w.submit(&chat);
    w.mine(1);
    let on = w.ack(0, id, true);
    w.submit(&Transaction::new(&w.parties[0], TxPayload::Acknowledge { id_p: id, ack: on.ct }));
    w.mine(p.h_neg + K);
    let pop = w.chain.pop_between(&chat.id(), 0, w.chain.height()).unwrap();
    assert_eq!(w.e0.fail_negotiation(&chat, &pop).unwrap_err(), EnclaveError::NegotiationPossible);
}

#[test]
fn operations_respect_status_order() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = (0..3).map(|i| w.input(i, id, 1, None)).collect();
    assert_eq!(w.e0.commit(&id).unwrap_err(), EnclaveError::WrongStatus(EnclaveStatus::Negotiated));
    let snap = w.snapshot();
    w.e0.execute(&id, &inputs, &snap).unwrap();
    assert_eq!(
        w.e0.challenge_parties(&id, &[w.parties[0].ad.clone()]).unwrap_err(),
        EnclaveError::WrongStatus(EnclaveStatus::Executed)
    );
    assert_eq!(w.e0.execute(&id, &inputs, &snap).unwrap_err(), EnclaveError::WrongStatus(EnclaveStatus::Executed));
    assert_eq!(w.e0.negotiate(&id, &[]).unwrap_err(), EnclaveError::WrongStatus(EnclaveStatus::Executed));
}

#[test]
fn stale_snapshot_is_rejected() {
    let mut w = world(3);
    let p = w.negotiated(10);
    let id = p.id();
    let inputs: Vec<Sealed> = (0..3).map(|i| w.input(i, id, 1, None)).collect();
    let mut snap = w.snapshot();
    snap.commitments.push(snap.commitments.first().cloned().unwrap_or_else(|| {
        let a = &w.parties[0];
        let shared = derive_shared(&a.sk, &w.net.pk).unwrap();
        decloak::crypto::commit_private(b"x", &SymmetricKey::from_bytes([1; 32]), &shared, &a.ad)
    }));
    assert_eq!(w.e0.execute(&id, &inputs, &snap).unwrap_err(), EnclaveError::BadSnapshot);
    let mut snap = w.snapshot();
    snap.namespace = "erc20".into();
    assert_eq!(w.e0.execute(&id, &inputs, &snap).unwrap_err(), EnclaveError::BadSnapshot);
    assert_eq!(w.e0.status(&id), EnclaveStatus::Negotiated);
}

#[test]
fn debug_output_is_redacted() {
    let w = world(3);
    let s = format!("{:?}", w.e0);
    assert!(s.starts_with("Enclave {"));
    assert!(!s.contains("sk"));
}
