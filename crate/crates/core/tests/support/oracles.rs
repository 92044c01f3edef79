//! Reference implementations of the seven app functions over plain Rust types, plus a
//! generator of random workloads. Nothing here calls into `decloak::apps`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest as _, Sha256};

use decloak::apps::Value;
use decloak::crypto::Address;

#[derive(Clone, Debug)]
pub enum Target {
    Party(usize),
    Stranger,
    NotAddress,
}

#[derive(Clone, Debug)]
pub enum Bid {
    Price(u64),
    Buy(u64),
    Junk,
}

#[derive(Clone, Debug)]
pub struct Motion {
    pub vote: Option<bool>,
    pub request: Option<(Target, Option<u64>)>,
}

#[derive(Clone, Debug)]
pub struct Approval {
    pub approve: Option<(Target, u64)>,
    pub pull: Option<(Target, u64)>,
}

#[derive(Clone, Debug)]
pub enum Inputs {
    Scores(Vec<Option<u64>>),
    Supply(Vec<Bid>),
    Transfer(Vec<Option<(Target, u64)>>),
    Approved(Vec<Approval>),
    Batch(Vec<Option<Vec<Option<(Target, u64)>>>>),
    Yundou(Vec<Motion>),
    Oracle(Vec<Option<Vec<u8>>>),
}

/// One random case: the app's inputs and each party's starting balance.
#[derive(Clone, Debug)]
pub struct Case {
    pub app: &'static str,
    pub inputs: Inputs,
    pub balances: Vec<u64>,
}

fn amount(rng: &mut ChaCha8Rng) -> u64 {
    match rng.gen_range(0..10) {
        0 => 0,
        1 => u64::MAX - rng.gen_range(0..1000),
        _ => rng.gen_range(0..500),
    }
}

fn balance(rng: &mut ChaCha8Rng) -> u64 {
    match rng.gen_range(0..12) {
        0 => 0,
        1 => u64::MAX - rng.gen_range(0..300),
        _ => rng.gen_range(0..600),
    }
}

fn target(rng: &mut ChaCha8Rng, n: usize) -> Target {
    match rng.gen_range(0..10) {
        0 => Target::Stranger,
        1 => Target::NotAddress,
        _ => Target::Party(rng.gen_range(0..n)),
    }
}

fn maybe<T>(rng: &mut ChaCha8Rng, p: f64, f: impl FnOnce(&mut ChaCha8Rng) -> T) -> Option<T> {
    if rng.gen_bool(p) {
        Some(f(rng))
    } else {
        None
    }
}

pub fn random_case(app: &'static str, n: usize, rng: &mut ChaCha8Rng) -> Case {
    let balances = (0..n).map(|_| balance(rng)).collect();
    let inputs = match app {
        "scores_mean" => Inputs::Scores(
            (0..n).map(|_| maybe(rng, 0.9, |r| if r.gen_bool(0.1) { u64::MAX } else { r.gen_range(0..=100) })).collect(),
        ),
        "supply_chain" => Inputs::Supply(
            (0..n)
                .map(|_| match rng.gen_range(0..10) {
                    0..=2 => Bid::Buy(amount(rng)),
                    3 => Bid::Junk,
                    _ => Bid::Price(amount(rng)),
                })
                .collect(),
        ),
        "erc20_transfer" => Inputs::Transfer((0..n).map(|_| maybe(rng, 0.85, |r| (target(r, n), amount(r)))).collect()),
        "erc20_approved_transfer" => Inputs::Approved(
            (0..n)
                .map(|_| Approval {
                    approve: maybe(rng, 0.6, |r| (target(r, n), amount(r))),
                    pull: maybe(rng, 0.6, |r| (target(r, n), amount(r))),
                })
                .collect(),
        ),
        "erc20_batch_transfer" => Inputs::Batch(
            (0..n)
                .map(|_| {
                    maybe(rng, 0.9, |r| {
                        let legs = r.gen_range(0..4);
                        (0..legs).map(|_| maybe(r, 0.9, |r| (target(r, n), amount(r)))).collect()
                    })
                })
                .collect(),
        ),
        "yundou_vote_transfer" => Inputs::Yundou(
            (0..n)
                .map(|_| Motion {
                    vote: maybe(rng, 0.85, |r| r.gen_bool(0.6)),
                    request: maybe(rng, 0.4, |r| (target(r, n), maybe(r, 0.9, amount))),
                })
                .collect(),
        ),
        "oracle_random" => Inputs::Oracle(
            (0..n).map(|_| maybe(rng, 0.9, |r| (0..r.gen_range(0..24)).map(|_| r.gen::<u8>()).collect())).collect(),
        ),
        other => panic!("unknown app {other}"),
    };
    Case { app, inputs, balances }
}

// ---- encoding the plain inputs as app parameters ----

fn target_value(t: &Target, parties: &[Address]) -> Value {
    match t {
        Target::Party(j) => Value::Address(parties[*j].clone()),
        Target::Stranger => Value::Address(Address::from_bytes(vec![0xEE; parties[0].width()])),
        Target::NotAddress => Value::Uint(7),
    }
}

fn rec(fields: Vec<(&str, Value)>) -> Value {
    Value::record(fields)
}

fn send(leg: &Option<(Target, u64)>, parties: &[Address]) -> Value {
    match leg {
        Some((t, a)) => rec(vec![("to", target_value(t, parties)), ("amount", Value::Uint(*a))]),
        None => Value::empty_record(),
    }
}

impl Case {
    pub fn n(&self) -> usize {
        self.balances.len()
    }

    /// The parameter records handed to the enclave.
    pub fn params(&self, parties: &[Address]) -> Vec<Value> {
        let wrap = |id: &str, v: Value| rec(vec![(id, v)]);
        (0..self.n())
            .map(|i| match &self.inputs {
                Inputs::Scores(s) => wrap("score", s[i].map_or(Value::Bool(true), Value::Uint)),
                Inputs::Supply(b) => wrap(
                    "bid",
                    match b[i] {
                        Bid::Price(p) => Value::Uint(p),
                        Bid::Buy(budget) => rec(vec![("buy", Value::Uint(budget))]),
                        Bid::Junk => Value::Bytes(b"?".to_vec()),
                    },
                ),
                Inputs::Transfer(t) => wrap("transfer", send(&t[i], parties)),
                Inputs::Approved(a) => {
                    let mut f = Vec::new();
                    if let Some((t, x)) = &a[i].approve {
                        f.push(("spender", target_value(t, parties)));
                        f.push(("allowance", Value::Uint(*x)));
                    }
                    if let Some((t, x)) = &a[i].pull {
                        f.push(("from", target_value(t, parties)));
                        f.push(("amount", Value::Uint(*x)));
                    }
                    wrap("approval", rec(f))
                }
                Inputs::Batch(b) => wrap(
                    "batch",
                    match &b[i] {
                        Some(legs) => Value::List(legs.iter().map(|l| send(l, parties)).collect()),
                        None => Value::Uint(1),
                    },
                ),
                Inputs::Yundou(m) => {
                    let mut f = Vec::new();
                    if let Some(v) = m[i].vote {
                        f.push(("vote", Value::Bool(v)));
                    }
                    if let Some((t, a)) = &m[i].request {
                        f.push(("request_to", target_value(t, parties)));
                        if let Some(a) = a {
                            f.push(("amount", Value::Uint(*a)));
                        }
                    }
                    wrap("motion", rec(f))
                }
                Inputs::Oracle(o) => wrap("share", o[i].clone().map_or(Value::Uint(0), Value::Bytes)),
            })
            .collect()
    }

    pub fn uses_balance(&self) -> bool {
        !matches!(self.inputs, Inputs::Scores(_) | Inputs::Oracle(_))
    }

    /// Starting states: `{balance}` for token-like apps, an unrelated record otherwise.
    pub fn states(&self) -> Vec<Value> {
        self.balances
            .iter()
            .map(|b| if self.uses_balance() { rec(vec![("balance", Value::Uint(*b))]) } else { rec(vec![("memo", Value::Uint(*b))]) })
            .collect()
    }

    /// Expected `(new states, returns)`.
    pub fn expected(&self) -> (Vec<Value>, Vec<Value>) {
        let n = self.n();
        let mut bal = self.balances.clone();
        let returns: Vec<Value> = match &self.inputs {
            Inputs::Scores(s) => {
                let total: u128 = s.iter().map(|x| x.unwrap_or(0) as u128).sum();
                let mean = (total / n as u128) as u64;
                vec![rec(vec![("mean", Value::Uint(mean))]); n]
            }
            Inputs::Oracle(o) => {
                let mut h = Sha256::new();
                for share in o.iter().flatten() {
                    h.update(share);
                }
                vec![rec(vec![("random", Value::Bytes(h.finalize().to_vec()))]); n]
            }
            Inputs::Supply(b) => supply(b, &mut bal),
            Inputs::Transfer(t) => t
                .iter()
                .enumerate()
                .map(|(i, leg)| {
                    let ok = match leg {
                        Some((to, a)) => pay(&mut bal, i, to, *a),
                        None => true,
                    };
                    rec(vec![("ok", Value::Bool(ok))])
                })
                .collect(),
            Inputs::Approved(a) => approved(a, &mut bal),
            Inputs::Batch(b) => b
                .iter()
                .enumerate()
                .map(|(i, legs)| {
                    let mut ok = true;
                    for leg in legs.iter().flatten() {
                        let went = match leg {
                            Some((to, a)) => pay(&mut bal, i, to, *a),
                            None => false,
                        };
                        ok = ok && went;
                    }
                    rec(vec![("ok", Value::Bool(ok))])
                })
                .collect(),
            Inputs::Yundou(m) => {
                let executed = yundou(m, &mut bal);
                vec![rec(vec![("executed", Value::Bool(executed))]); n]
            }
        };
        let states = if self.uses_balance() {
            bal.iter().map(|b| rec(vec![("balance", Value::Uint(*b))])).collect()
        } else {
            self.states()
        };
        (states, returns)
    }
}

/// Moves `a` from `i` to the party `to`; a self-transfer succeeds without effect.
fn pay(bal: &mut [u64], i: usize, to: &Target, a: u64) -> bool {
    let Target::Party(j) = *to else { return false };
    if j == i {
        return true;
    }
    if bal[i] < a {
        return false;
    }
    match bal[j].checked_add(a) {
        Some(c) => {
            bal[i] -= a;
            bal[j] = c;
            true
        }
        None => false,
    }
}

fn supply(bids: &[Bid], bal: &mut [u64]) -> Vec<Value> {
    let mut winner: Option<(usize, u64)> = None;
    for (i, b) in bids.iter().enumerate() {
        if let Bid::Price(p) = b {
            if winner.map_or(true, |(_, best)| *p < best) {
                winner = Some((i, *p));
            }
        }
    }
    let buyer = bids.iter().enumerate().find_map(|(i, b)| match b {
        Bid::Buy(budget) => Some((i, *budget)),
        _ => None,
    });
    let mut paid = false;
    if let (Some((w, p)), Some((b, budget))) = (winner, buyer) {
        if budget >= p && bal[b] >= p {
            if let Some(c) = bal[w].checked_add(p) {
                bal[b] -= p;
                bal[w] = c;
                paid = true;
            }
        }
    }
    (0..bids.len())
        .map(|i| {
            let price = winner.map_or(0, |(_, p)| p);
            let (won, amount) = match (winner.map(|w| w.0) == Some(i), buyer.map(|b| b.0) == Some(i)) {
                (true, _) => (true, if paid { price } else { 0 }),
                (_, true) => (paid, if paid { price } else { 0 }),
                _ => (false, 0),
            };
            rec(vec![("won", Value::Bool(won)), ("amount", Value::Uint(amount))])
        })
        .collect()
}

fn approved(a: &[Approval], bal: &mut [u64]) -> Vec<Value> {
    let n = a.len();
    let mut allow = vec![vec![0u64; n]; n];
    for (i, x) in a.iter().enumerate() {
        if let Some((Target::Party(j), amount)) = &x.approve {
            allow[i][*j] = *amount;
        }
    }
    (0..n)
        .map(|j| {
            let ok = match &a[j].pull {
                None => true,
                Some((Target::Party(i), amount)) if allow[*i][j] >= *amount => {
                    let moved = pay(bal, *i, &Target::Party(j), *amount);
                    if moved {
                        allow[*i][j] -= amount;
                    }
                    moved
                }
                Some(_) => false,
            };
            rec(vec![("ok", Value::Bool(ok))])
        })
        .collect()
}

fn yundou(m: &[Motion], bal: &mut [u64]) -> bool {
    let n = m.len();
    let approvals = m.iter().filter(|x| x.vote == Some(true)).count();
    let request = m.iter().enumerate().find_map(|(i, x)| match &x.request {
        Some((Target::Party(j), Some(a))) => Some((i, Some(*j), *a)),
        Some((Target::Stranger, Some(a))) => Some((i, None, *a)),
        _ => None,
    });
    let Some((from, Some(to), a)) = request else { return false };
    approvals * 2 > n && from != to && pay(bal, from, &Target::Party(to), a)
}
