//! Protocol invariants over generated schedules and inputs.

mod support;

use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use decloak::apps::{self, Value};
use decloak::crypto::{
    commit_private, derive_shared, keygen_account, open_commitment, strip_key_slot, SymmetricKey,
};
use decloak::harness::{self, corpus, Evidence};
use decloak::network::{run, Scenario};
use decloak::protocol::ProposalStatus;

fn config() -> ProptestConfig {
    ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() }
}

/// Swaps every honest party's integer input (or integer field) for one drawn from `values`.
fn with_inputs(mut sc: Scenario, values: &[u64]) -> Scenario {
    let honest: Vec<String> = sc.actors.iter().filter(|a| a.behavior.is_honest()).map(|a| a.name.clone()).collect();
    let mut next = values.iter().cycle();
    for p in &mut sc.proposals {
        for (name, x) in p.inputs.iter_mut() {
            if !honest.contains(name) {
                continue;
            }
            let v = toml::Value::Integer(*next.next().unwrap() as i64);
            match x {
                toml::Value::Integer(_) => *x = v,
                toml::Value::Table(t) => {
                    if let Some(slot) = t.get_mut("amount") {
                        *slot = v;
                    }
                }
                _ => {}
            }
        }
    }
    sc
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn adversary_view_is_independent_of_honest_inputs(
        app in prop::sample::select(vec!["scores_mean", "erc20_transfer"]),
        n in 2usize..5,
        seed in 0u64..1000,
        a in prop::collection::vec(0u64..100, 4),
        b in prop::collection::vec(0u64..100, 4),
    ) {
        let base = corpus::honest(app, n, seed);
        let one = run(&with_inputs(base.clone(), &a));
        let two = run(&with_inputs(base, &b));
        prop_assert_eq!(one.status_of(0), Some(ProposalStatus::Completed));
        prop_assert_eq!(one.adversary_view, two.adversary_view);
    }

    #[test]
    fn oracle_shares_of_equal_length_are_hidden(seed in 0u64..1000, x in any::<[u8; 6]>(), y in any::<[u8; 6]>()) {
        let mut sc = corpus::honest("oracle_random", 3, seed);
        let mut other = sc.clone();
        sc.proposals[0].inputs.insert("P1".into(), toml::Value::String(format!("0x{}", hex::encode(x))));
        other.proposals[0].inputs.insert("P1".into(), toml::Value::String(format!("0x{}", hex::encode(y))));
        prop_assert_eq!(run(&sc).adversary_view, run(&other).adversary_view);
    }

    #[test]
    fn randomized_runs_keep_ledger_and_status_invariants(seed in 0u64..100_000) {
        let sc = corpus::randomized(seed);
        let r = run(&sc);
        let c = r.chain.executor();
        let ev = Evidence::from_run(&r);
        // A fuzzed actor may lose its own deposit transaction, so start from what landed.
        let (_, initial) = ev.balances("initial").unwrap();
        prop_assert_eq!(c.total_supply() + c.burned(), initial.values().sum::<u64>());
        let fined: u64 = c.records().map(|rec| rec.q * rec.punished.len() as u64).sum();
        prop_assert!(c.burned() <= fined);

        for rec in c.records() {
            prop_assert!(rec.sta.is_terminal(), "{:?} left open", rec.sta);
            prop_assert_eq!(rec.punished.is_empty(), rec.sta != ProposalStatus::Aborted);
        }

        // Only the proposal's specified enclave drives negotiation, punishment and commit.
        for e in r.trace.of_kind("submit") {
            if !["fneg", "chaP", "pnsP", "cmt"].contains(&e.note.as_str()) {
                continue;
            }
            let tee = ev.id_of(ev.index_of(e).unwrap()).and_then(|id| c.record(&id)).map(|rec| ev.name_of(&rec.tee));
            if let Some(tee) = tee {
                prop_assert_eq!(&e.actor, &tee, "{} sent by a non-specified enclave", e.note);
            }
        }

        prop_assert!(!harness::check_status_machine(&ev).is_fail());
        prop_assert!(!harness::check_delivery_atomicity(&ev).is_fail());
        prop_assert!(!harness::check_financial_fairness(&ev).is_fail());
    }

    #[test]
    fn honest_envelopes_arrive_within_delta(seed in 0u64..100_000) {
        let sc = corpus::randomized(seed);
        let honest = |name: &str| sc.actors.iter().any(|a| a.name == name && a.behavior.is_honest());
        let r = run(&sc);
        for e in r.trace.of_kind("send") {
            let to = e.data_str("to").unwrap();
            if honest(&e.actor) && honest(to) {
                let late = e.data_u64("deliver_at").unwrap() - e.tick;
                prop_assert!(late >= 1 && late <= sc.network.delta, "{} -> {to}: {late} ticks", e.actor);
            }
        }
    }

    #[test]
    fn blocks_are_hash_linked_and_consecutive(seed in 0u64..100_000) {
        let r = run(&corpus::randomized(seed));
        for pair in r.blocks().windows(2) {
            prop_assert_eq!(pair[1].height(), pair[0].height() + 1);
            prop_assert_eq!(pair[1].header.parent_digest, pair[0].digest());
        }
    }

    #[test]
    fn commitments_open_by_both_keys_and_not_when_stripped(
        owner in any::<[u8; 8]>(),
        data in prop::collection::vec(any::<u8>(), 0..64),
        otk in any::<[u8; 32]>(),
    ) {
        let party = keygen_account(&owner);
        let network = keygen_account(b"properties-network");
        let stranger = keygen_account(b"properties-stranger");
        let shared = derive_shared(&party.sk, &network.pk).unwrap();
        prop_assert_eq!(&shared, &derive_shared(&network.sk, &party.pk).unwrap());

        let c = commit_private(&data, &SymmetricKey::from_bytes(otk), &shared, &party.ad);
        prop_assert_eq!(open_commitment(&party.sk, &network.pk, &c).unwrap(), data.clone());
        prop_assert_eq!(open_commitment(&network.sk, &party.pk, &c).unwrap(), data);
        prop_assert!(open_commitment(&stranger.sk, &network.pk, &c).is_err());

        let bare = strip_key_slot(&c);
        for (sk, pk) in [(&party.sk, &network.pk), (&network.sk, &party.pk), (&stranger.sk, &party.pk)] {
            prop_assert!(open_commitment(sk, pk, &bare).is_err());
        }
    }

    #[test]
    fn apps_are_pure_conserving_and_stay_within_policy(
        app in prop::sample::select(apps::APP_NAMES.to_vec()),
        n in 1usize..7,
        seed in any::<u64>(),
    ) {
        let (a, case, parties) = sample(app, n, seed);
        let (states, params) = (case.states(), case.params(&parties));
        let out = a.evaluate(&parties, &states, &params);
        prop_assert_eq!(&out, &a.evaluate(&parties, &states, &params));

        if !matches!(app, "scores_mean" | "oracle_random") {
            let total = |s: &[Value]| -> u128 { s.iter().map(|v| v.field("balance").and_then(Value::as_uint).unwrap_or(0) as u128).sum() };
            prop_assert_eq!(total(&states), total(&out.new_states));
        }
        for (i, p) in parties.iter().enumerate() {
            let reads: BTreeSet<&str> = a.policy.read_ids(p).into_iter().collect();
            let writes: BTreeSet<&str> = a.policy.write_ids(p).into_iter().collect();
            prop_assert!(out.reads.iter().filter(|(j, _)| *j == i).all(|(_, id)| reads.contains(id.as_str())));
            prop_assert!(out.writes.iter().filter(|(j, _)| *j == i).all(|(_, id)| writes.contains(id.as_str())));
        }
    }
}

fn sample(app: &'static str, n: usize, seed: u64) -> (apps::App, support::oracles::Case, Vec<decloak::crypto::Address>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let case = support::oracles::random_case(app, n, &mut rng);
    let parties = (0..n).map(|i| keygen_account(&[i as u8]).ad).collect();
    (apps::app(app, 1).unwrap(), case, parties)
}

/// Over a sample, every declared state variable is actually read and written.
#[test]
fn declared_state_is_exactly_what_apps_touch() {
    for app in apps::APP_NAMES {
        let (mut reads, mut writes) = (BTreeSet::new(), BTreeSet::new());
        let mut declared = BTreeSet::new();
        for seed in 0..200 {
            let (a, case, parties) = sample(app, 1 + (seed as usize % 6), seed);
            let out = a.evaluate(&parties, &case.states(), &case.params(&parties));
            reads.extend(out.reads.into_iter().map(|(_, id)| id));
            writes.extend(out.writes.into_iter().map(|(_, id)| id));
            declared.extend(parties.iter().flat_map(|p| a.policy.write_ids(p)).map(str::to_string));
        }
        assert_eq!(reads, declared, "{app} reads");
        assert_eq!(writes, declared, "{app} writes");
    }
}
