//! Trace checkers. Each returns pass, fail with the offending event indices, or n/a.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::Serialize;

use super::oracle::{accepted, cmt_of, reconstruct, replay};
use super::Evidence;
use crate::chain::{TxKind, TxPayload};
use crate::network::Event;
use crate::protocol::ProposalStatus;

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail { events: Vec<usize>, reason: String },
    NotApplicable,
}

impl Verdict {
    fn fail(mut events: Vec<usize>, anchor: usize, reason: impl Into<String>) -> Verdict {
        if events.is_empty() {
            events.push(anchor);
        }
        events.sort_unstable();
        events.dedup();
        Verdict::Fail { events, reason: reason.into() }
    }

    pub fn is_fail(&self) -> bool {
        matches!(self, Verdict::Fail { .. })
    }

    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail { .. } => "fail",
            Verdict::NotApplicable => "n/a",
        }
    }
}

pub const CHECKS: [&str; 6] = [
    "correctness",
    "data_availability",
    "financial_fairness",
    "delivery_fairness",
    "delivery_atomicity",
    "status_machine",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct CheckReport {
    pub scenario: String,
    pub checks: Vec<(String, Verdict)>,
}

impl CheckReport {
    pub fn get(&self, name: &str) -> Option<&Verdict> {
        self.checks.iter().find(|(n, _)| n == name).map(|(_, v)| v)
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|(_, v)| !v.is_fail())
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, v) in &self.checks {
            let _ = write!(out, "{:<20} {}", name, v.label());
            if let Verdict::Fail { events, reason } = v {
                let _ = write!(out, "  events {events:?}: {reason}");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs every checker. `delta` overrides the scenario's delivery bound.
pub fn check_all(ev: &Evidence, delta: Option<u64>) -> CheckReport {
    let checks = vec![
        ("correctness", check_correctness(ev)),
        ("data_availability", check_data_availability(ev)),
        ("financial_fairness", check_financial_fairness(ev)),
        ("delivery_fairness", check_delivery_fairness(ev, delta.unwrap_or(ev.scenario.network.delta))),
        ("delivery_atomicity", check_delivery_atomicity(ev)),
        ("status_machine", check_status_machine(ev)),
    ];
    CheckReport { scenario: ev.scenario.name.clone(), checks: checks.into_iter().map(|(n, v)| (n.to_string(), v)).collect() }
}

fn learns(ev: &Evidence) -> impl Iterator<Item = (usize, &Event)> {
    ev.trace.events.iter().enumerate().filter(|(_, e)| e.kind == "learn")
}

fn completed(ev: &Evidence) -> Vec<usize> {
    (0..ev.scenario.proposals.len()).filter(|&i| ev.final_status(i) == Some(ProposalStatus::Completed)).collect()
}

/// Honest actors whose end balance is below their post-deposit balance.
fn honest_losses(ev: &Evidence) -> Result<Vec<String>, usize> {
    let (Some((_, before)), Some((_, after))) = (ev.balances("initial"), ev.balances("end")) else {
        return Err(ev.anchor());
    };
    Ok(before
        .iter()
        .filter(|(n, q)| ev.is_honest(n) && after.get(*n).copied().unwrap_or(0) < **q)
        .map(|(n, _)| n.clone())
        .collect())
}

/// Every output a party opened matches the oracle, and no honest actor lost coins.
pub fn check_correctness(ev: &Evidence) -> Verdict {
    let done = completed(ev);
    if done.is_empty() {
        return Verdict::NotApplicable;
    }
    let expected = match replay(ev) {
        Ok(x) => x,
        Err(e) => return Verdict::fail(vec![], ev.anchor(), format!("oracle replay: {e}")),
    };
    let mut bad = Vec::new();
    let mut why = String::new();
    for (i, e) in learns(ev) {
        let Some(index) = ev.index_of(e) else { continue };
        let Some(x) = ev.id_of(index).and_then(|id| expected.get(&id)) else { continue };
        let Some(slot) = x.parties.iter().position(|a| ev.name_of(a) == e.actor) else {
            bad.push(i);
            why = format!("{} learned an output of proposal {index} without a slot", e.actor);
            continue;
        };
        let want = if e.note == "state" { &x.states[slot] } else { &x.returns[slot] };
        if e.data_str("fingerprint") != Some(want.fingerprint().to_hex().as_str()) {
            bad.push(i);
            why = format!("{}'s {} for proposal {index} differs from the oracle", e.actor, e.note);
        }
    }
    if !bad.is_empty() {
        return Verdict::fail(bad, ev.anchor(), why);
    }
    match honest_losses(ev) {
        Err(at) => Verdict::fail(vec![at], at, "balances missing from trace"),
        Ok(l) if !l.is_empty() => Verdict::fail(vec![], ev.anchor(), format!("honest actors lost coins: {}", l.join(", "))),
        Ok(_) => Verdict::Pass,
    }
}

/// Either every honest actor keeps its coins, or a proposal aborted, only
/// misbehaving actors were punished and they lost coins in total.
pub fn check_financial_fairness(ev: &Evidence) -> Verdict {
    let (Some((bi, before)), Some((ei, after))) = (ev.balances("initial"), ev.balances("end")) else {
        return Verdict::fail(vec![], ev.anchor(), "balances missing from trace");
    };
    let mut bad = Vec::new();
    let mut why = Vec::new();
    for (n, q) in &before {
        if ev.is_honest(n) && after.get(n).copied().unwrap_or(0) < *q {
            bad.extend([bi, ei]);
            why.push(format!("honest {n} dropped from {q} to {}", after.get(n).copied().unwrap_or(0)));
        }
    }
    let mut aborted = false;
    for (i, e) in ev.trace.events.iter().enumerate().filter(|(_, e)| e.kind == "status") {
        if e.data_str("to") != Some("ABORTED") {
            continue;
        }
        aborted = true;
        let punished: Vec<&str> =
            e.data.get("punished").and_then(|p| p.as_array()).map(|a| a.iter().filter_map(|v| v.as_str()).collect()).unwrap_or_default();
        if punished.is_empty() {
            bad.push(i);
            why.push("aborted with nobody punished".into());
        }
        for p in punished {
            if ev.is_honest(p) {
                bad.push(i);
                why.push(format!("honest {p} punished"));
            }
        }
    }
    if aborted {
        let malicious = |m: &BTreeMap<String, u64>| -> u64 { m.iter().filter(|(n, _)| !ev.is_honest(n)).map(|(_, q)| q).sum() };
        if malicious(&after) >= malicious(&before) {
            bad.push(ei);
            why.push("misbehaving actors lost nothing".into());
        }
    }
    if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::fail(bad, ei, why.join("; "))
    }
}

/// Nobody learns, or every honest settled party learns both outputs within `delta` ticks of each other.
pub fn check_delivery_fairness(ev: &Evidence, delta: u64) -> Verdict {
    let mut by_proposal: BTreeMap<usize, Vec<(usize, &Event)>> = BTreeMap::new();
    for (i, e) in learns(ev) {
        if let Some(index) = ev.index_of(e) {
            by_proposal.entry(index).or_default().push((i, e));
        }
    }
    let mut bad = Vec::new();
    let mut why = Vec::new();
    for (index, ls) in by_proposal {
        let settled: BTreeSet<String> = ev
            .id_of(index)
            .and_then(|id| cmt_of(&ev.blocks, &id))
            .map(|(_, tx)| match &tx.payload {
                TxPayload::Commit { new_states, .. } => new_states.iter().map(|c| ev.name_of(&c.owner)).collect(),
                _ => BTreeSet::new(),
            })
            .unwrap_or_default();
        let honest: BTreeSet<String> =
            settled.iter().chain(ls.iter().map(|(_, e)| &e.actor)).filter(|n| ev.is_honest(n)).cloned().collect();
        let mut firsts: Vec<(u64, usize)> = Vec::new();
        for name in &honest {
            let first = |what: &str| ls.iter().filter(|(_, e)| &e.actor == name && e.note == what).map(|(i, e)| (e.tick, *i)).min();
            match (first("state"), first("return")) {
                (Some(s), Some(r)) => {
                    if s.0.abs_diff(r.0) > delta {
                        bad.extend([s.1, r.1]);
                        why.push(format!("{name} learned state and return {} ticks apart", s.0.abs_diff(r.0)));
                    }
                    firsts.extend([s, r]);
                }
                _ => {
                    bad.extend(ls.iter().map(|(i, _)| *i));
                    why.push(format!("honest {name} never learned its outputs of proposal {index}"));
                }
            }
        }
        if let (Some(lo), Some(hi)) = (firsts.iter().min(), firsts.iter().max()) {
            if hi.0 - lo.0 > delta {
                bad.extend([lo.1, hi.1]);
                why.push(format!("proposal {index}: learning spread {} > {delta}", hi.0 - lo.0));
            }
        }
    }
    if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::fail(bad, ev.anchor(), why.join("; "))
    }
}

/// Learning an output implies the proposal completed and its commit was confirmed first.
pub fn check_delivery_atomicity(ev: &Evidence) -> Verdict {
    let k = ev.scenario.chain.finality_depth;
    let mut bad = Vec::new();
    let mut why = Vec::new();
    for (i, e) in learns(ev) {
        let index = ev.index_of(e);
        let status = index.and_then(|x| ev.final_status(x));
        if status != Some(ProposalStatus::Completed) {
            bad.push(i);
            why.push(format!("{} learned an output of a proposal ending {}", e.actor, status.map_or("NONE", |s| s.as_str())));
            continue;
        }
        match index.and_then(|x| ev.id_of(x)).and_then(|id| cmt_of(&ev.blocks, &id)) {
            Some((h, _)) if e.height + 1 >= h + k => {}
            Some((h, _)) => {
                bad.extend([i].into_iter().chain(ev.block_event(h)));
                why.push(format!("{} learned at height {} before the commit at {h} was confirmed", e.actor, e.height));
            }
            None => {
                bad.push(i);
                why.push(format!("{} learned without a commit on chain", e.actor));
            }
        }
    }
    if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::fail(bad, ev.anchor(), why.join("; "))
    }
}

/// Every completed proposal's outputs open from chain data with the owner key and with
/// the network key, and both agree with the oracle.
pub fn check_data_availability(ev: &Evidence) -> Verdict {
    let done = completed(ev);
    if done.is_empty() {
        return Verdict::NotApplicable;
    }
    let expected = match replay(ev) {
        Ok(x) => x,
        Err(e) => return Verdict::fail(vec![], ev.anchor(), format!("oracle replay: {e}")),
    };
    let mut bad = Vec::new();
    let mut why = Vec::new();
    for index in done {
        let Some(id) = ev.id_of(index) else {
            why.push(format!("proposal {index} completed without a known id"));
            bad.push(ev.anchor());
            continue;
        };
        let at: Vec<usize> =
            accepted(&ev.blocks, &id, TxKind::Com).iter().filter_map(|(h, _)| ev.block_event(*h)).collect();
        let parts = match reconstruct(ev, &id) {
            Ok(p) => p,
            Err(e) => {
                bad.extend(at.iter().copied().chain([ev.anchor()]));
                why.push(format!("proposal {index}: {e}"));
                continue;
            }
        };
        let x = &expected[&id];
        for r in parts {
            let slot = x.parties.iter().position(|a| *a == r.owner);
            let want = slot.map(|s| if r.what == "state" { &x.states[s] } else { &x.returns[s] });
            let who = ev.name_of(&r.owner);
            for (route, got) in [("party key", &r.via_party), ("network key", &r.via_network)] {
                match got {
                    Ok(v) if Some(v) == want => {}
                    Ok(_) => why.push(format!("{who}'s {} via {route} differs from the enclave output", r.what)),
                    Err(e) => why.push(format!("{who}'s {} via {route}: {e}", r.what)),
                }
            }
            if r.via_party.is_err() || r.via_network.is_err() || r.via_party.as_ref().ok() != want || r.via_network.as_ref().ok() != want {
                bad.extend(at.iter().copied().chain([ev.anchor()]));
            }
        }
    }
    if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::fail(bad, ev.anchor(), why.join("; "))
    }
}

/// Status only moves NONE → PROPOSED → terminal, and a proposal stays non-terminal
/// only if nobody ever challenged the enclave over it.
pub fn check_status_machine(ev: &Evidence) -> Verdict {
    let mut last: BTreeMap<String, (String, usize)> = BTreeMap::new();
    let mut bad = Vec::new();
    let mut why = Vec::new();
    for (i, e) in ev.trace.events.iter().enumerate().filter(|(_, e)| e.kind == "status") {
        let (from, to) = (e.data_str("from").unwrap_or("?"), e.data_str("to").unwrap_or("?"));
        let prev = last.get(&e.digest).map_or("NONE", |(s, _)| s.as_str());
        let legal = match (from, to) {
            ("NONE", "PROPOSED") => true,
            ("NONE" | "PROPOSED", t) => ProposalStatus::parse(t).is_some_and(ProposalStatus::is_terminal),
            _ => false,
        };
        if !legal || from != prev {
            bad.extend([i].into_iter().chain(last.get(&e.digest).map(|(_, j)| *j)));
            why.push(format!("illegal transition {prev}/{from} -> {to}"));
        }
        last.insert(e.digest.clone(), (to.to_string(), i));
    }
    for index in 0..ev.scenario.proposals.len() {
        let status = ev.final_status(index);
        if status.is_some_and(ProposalStatus::is_terminal) {
            continue;
        }
        let challenged = ev.id_of(index).map(|id| !accepted(&ev.blocks, &id, TxKind::ChaT).is_empty()).unwrap_or(false);
        if challenged {
            bad.push(ev.anchor());
            why.push(format!("proposal {index} was challenged but ended {}", status.map_or("NONE", |s| s.as_str())));
        }
    }
    if bad.is_empty() {
        Verdict::Pass
    } else {
        Verdict::fail(bad, ev.anchor(), why.join("; "))
    }
}
