//! Generated scenarios: honest runs of every app at any party count, the scripted
//! byzantine cases, and randomized adversarial schedules.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toml::Value as T;

use crate::network::{ActorSpec, Behavior, ProposalSpec, Role, Scenario, SettlementSpec};

fn party(i: usize) -> String {
    format!("P{}", i + 1)
}

fn addr(i: usize) -> T {
    T::String(format!("@{}", party(i)))
}

fn int(v: u64) -> T {
    T::Integer(v as i64)
}

fn table<const N: usize>(fields: [(&str, T); N]) -> T {
    T::Table(fields.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn actor(name: String, role: Role, behavior: Behavior) -> ActorSpec {
    ActorSpec { name, role, behavior, deposit: None }
}

/// Inputs and genesis state for `n` parties of `app`.
fn workload(app: &str, n: usize, rng: &mut ChaCha8Rng) -> (BTreeMap<String, T>, BTreeMap<String, T>) {
    let mut inputs = BTreeMap::new();
    let mut state = BTreeMap::new();
    let balance = |rng: &mut ChaCha8Rng| table([("balance", int(rng.gen_range(0..200)))]);
    for i in 0..n {
        let next = (i + 1) % n;
        let x = match app {
            "scores_mean" => int(rng.gen_range(0..=100)),
            "supply_chain" if i == 0 => table([("buy", int(rng.gen_range(50..400)))]),
            "supply_chain" => int(rng.gen_range(10..300)),
            "erc20_transfer" => table([("to", addr(next)), ("amount", int(rng.gen_range(0..120)))]),
            "erc20_approved_transfer" if i % 2 == 0 => {
                table([("spender", addr(next)), ("allowance", int(rng.gen_range(0..100)))])
            }
            "erc20_approved_transfer" => table([("from", addr(i - 1)), ("amount", int(rng.gen_range(0..100)))]),
            "erc20_batch_transfer" => T::Array(
                (1..n.min(3))
                    .map(|d| table([("to", addr((i + d) % n)), ("amount", int(rng.gen_range(0..60)))]))
                    .collect(),
            ),
            "yundou_vote_transfer" if i == 0 => table([
                ("vote", T::Boolean(true)),
                ("request_to", addr(next)),
                ("amount", int(rng.gen_range(0..80))),
            ]),
            "yundou_vote_transfer" => table([("vote", T::Boolean(rng.gen_bool(0.6)))]),
            "oracle_random" => {
                T::String(format!("0x{}", hex::encode((0..rng.gen_range(1..16)).map(|_| rng.gen::<u8>()).collect::<Vec<_>>())))
            }
            other => panic!("no workload for {other}"),
        };
        inputs.insert(party(i), x);
        if !matches!(app, "scores_mean" | "oracle_random") && rng.gen_bool(0.8) {
            state.insert(party(i), balance(rng));
        }
    }
    (inputs, state)
}

fn build(
    name: String,
    seed: u64,
    app: &str,
    executors: Vec<Behavior>,
    parties: Vec<Behavior>,
    rng: &mut ChaCha8Rng,
) -> Scenario {
    let n = parties.len();
    let (inputs, state) = workload(app, n, rng);
    let mut actors: Vec<ActorSpec> =
        executors.into_iter().enumerate().map(|(i, b)| actor(format!("E{i}"), Role::Executor, b)).collect();
    actors.extend(parties.into_iter().enumerate().map(|(i, b)| actor(party(i), Role::Party, b)));
    let namespace = crate::apps::namespace_of(app).expect("known app");
    let mut sc = Scenario {
        name,
        seed,
        max_ticks: None,
        chain: Default::default(),
        network: Default::default(),
        contract: Default::default(),
        actors,
        proposals: vec![ProposalSpec {
            app: app.to_string(),
            initiator: party(0),
            q: 10,
            h_neg: 8,
            tau_com: 40,
            settlement: SettlementSpec { min_parties: n },
            start_tick: None,
            decline: Vec::new(),
            inputs,
        }],
        state: BTreeMap::new(),
    };
    if !state.is_empty() {
        sc.state.insert(namespace.to_string(), state);
    }
    sc
}

/// Every actor honest: two executors and `n` parties running one proposal of `app`.
pub fn honest(app: &str, n: usize, seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build(format!("{app}_{n}"), seed, app, vec![Behavior::Honest; 2], vec![Behavior::Honest; n], &mut rng)
}

pub const BYZANTINE: [&str; 7] = [
    "withhold_input",
    "mismatch_input",
    "late_responder",
    "silent_executor",
    "drop_com_executor",
    "detain_cmt_executor",
    "failed_negotiation",
];

/// One scripted fault on a random app, party count and victim. The second value
/// names the actor that must be punished if the proposal aborts.
pub fn byzantine(kind: &str, seed: u64) -> (Scenario, Option<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let app = *crate::apps::APP_NAMES.choose(&mut rng).unwrap();
    let n = rng.gen_range(2..=5);
    let mut executors = vec![Behavior::Honest; 2];
    let mut parties = vec![Behavior::Honest; n];
    let victim = rng.gen_range(1..n);
    let culprit = match kind {
        "withhold_input" | "mismatch_input" | "late_responder" => {
            parties[victim] = match kind {
                "withhold_input" => Behavior::WithholdInput,
                "mismatch_input" => Behavior::MismatchInput,
                _ => Behavior::LateResponder,
            };
            Some(party(victim))
        }
        "silent_executor" => {
            executors[0] = Behavior::SilentExecutor;
            Some("E0".into())
        }
        "drop_com_executor" => {
            let leak_to = rng.gen_bool(0.5).then(|| party(rng.gen_range(0..n)));
            executors[0] = Behavior::DropComExecutor { leak_to, delay: rng.gen_range(0..5) };
            Some("E0".into())
        }
        "detain_cmt_executor" => {
            let release_after = rng.gen_bool(0.3).then(|| rng.gen_range(1..200));
            executors[0] = Behavior::DetainCmtExecutor { release_after };
            Some("E0".into())
        }
        "failed_negotiation" => None,
        other => panic!("unknown byzantine case {other}"),
    };
    let mut sc = build(format!("{kind}_{seed}"), seed, app, executors, parties, &mut rng);
    if kind == "failed_negotiation" {
        sc.proposals[0].inputs.remove(&party(victim));
        sc.proposals[0].decline.push(party(victim));
    }
    sc.proposals[0].q = rng.gen_range(1..=50);
    (sc, culprit)
}

/// Random executor faults with at least one honest executor, fuzzed parties and long delays.
pub fn randomized(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let app = *crate::apps::APP_NAMES.choose(&mut rng).unwrap();
    let n = rng.gen_range(2..=5);
    let m = rng.gen_range(2..=3);
    let honest_at = rng.gen_range(0..m);
    let executors = (0..m)
        .map(|i| {
            if i == honest_at {
                return Behavior::Honest;
            }
            match rng.gen_range(0..5) {
                0 => Behavior::Honest,
                1 => Behavior::SilentExecutor,
                2 => Behavior::DropComExecutor {
                    leak_to: rng.gen_bool(0.7).then(|| party(rng.gen_range(0..n))),
                    delay: rng.gen_range(0..10),
                },
                3 => Behavior::DetainCmtExecutor { release_after: rng.gen_bool(0.5).then(|| rng.gen_range(1..300)) },
                _ => Behavior::Fuzz { drop_per_mille: rng.gen_range(0..500), max_delay: rng.gen_range(0..400) },
            }
        })
        .collect();
    let parties = (0..n)
        .map(|_| {
            if rng.gen_bool(0.25) {
                Behavior::Fuzz { drop_per_mille: rng.gen_range(0..300), max_delay: rng.gen_range(0..400) }
            } else {
                Behavior::Honest
            }
        })
        .collect();
    let mut sc = build(format!("random_{seed}"), seed, app, executors, parties, &mut rng);
    sc.network.delta = rng.gen_range(1..=6);
    sc.proposals[0].settlement.min_parties = rng.gen_range(1..=n);
    sc
}
