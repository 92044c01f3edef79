//! Targeted corruptions of a run, one per checker. Each returns `None` when the run
//! lacks what the mutation needs.

use serde_json::json;

use super::Evidence;
use crate::chain::TxPayload;
use crate::network::Event;

fn rebuild(events: Vec<Event>, blocks: Vec<crate::chain::Block>) -> Evidence {
    Evidence::new(crate::network::Trace { events }, blocks).expect("config untouched")
}

/// Flips a learned return fingerprint. Trips correctness.
pub fn tamper_return(ev: &Evidence) -> Option<Evidence> {
    let mut events = ev.trace.events.clone();
    let e = events.iter_mut().find(|e| e.kind == "learn" && e.note == "return")?;
    let fp = e.data_str("fingerprint")?.to_string();
    let flipped = if fp.starts_with('0') { format!("1{}", &fp[1..]) } else { format!("0{}", &fp[1..]) };
    e.data["fingerprint"] = json!(flipped);
    Some(rebuild(events, ev.blocks.clone()))
}

/// Records a party learning outputs of a proposal that never completed. Trips atomicity.
pub fn inject_leak(ev: &Evidence) -> Option<Evidence> {
    let index = (0..ev.scenario.proposals.len())
        .find(|&i| ev.final_status(i) != Some(crate::protocol::ProposalStatus::Completed))?;
    let spec = &ev.scenario.proposals[index];
    let party = spec.inputs.keys().next()?.clone();
    let at = ev.anchor();
    let end = &ev.trace.events[at];
    let digest = ev.id_of(index).map(|d| d.to_hex()).unwrap_or_default();
    let mut events = ev.trace.events.clone();
    for what in ["state", "return"] {
        events.insert(
            at,
            Event {
                tick: end.tick,
                height: end.height,
                kind: "learn".into(),
                actor: party.clone(),
                digest: digest.clone(),
                note: what.into(),
                data: json!({"index": index, "fingerprint": "00".repeat(32), "via": "leak"}),
            },
        );
    }
    Some(rebuild(events, ev.blocks.clone()))
}

/// Punishes an honest actor instead of the culprit and books the loss. Trips financial fairness.
pub fn faulty_punish(ev: &Evidence) -> Option<Evidence> {
    let victim = ev.scenario.actors.iter().find(|a| a.behavior.is_honest())?.name.clone();
    let q = ev.scenario.proposals.first()?.q;
    let mut events = ev.trace.events.clone();
    let end = events.iter_mut().find(|e| e.kind == "end")?;
    let bal = end.data["balances"][&victim].as_u64()?;
    end.data["balances"][&victim] = json!(bal.saturating_sub(q.max(1)));
    if let Some(s) = events.iter_mut().find(|e| e.kind == "status" && e.data_str("to") == Some("ABORTED")) {
        s.data["punished"] = json!([victim]);
    }
    Some(rebuild(events, ev.blocks.clone()))
}

/// Moves one honest party's learning earlier than everyone else's by more than `delta`.
/// Trips delivery fairness.
pub fn early_leak(ev: &Evidence, delta: u64) -> Option<Evidence> {
    let mut events = ev.trace.events.clone();
    let first = events.iter().position(|e| e.kind == "learn" && ev.is_honest(&e.actor))?;
    let (actor, digest) = (events[first].actor.clone(), events[first].digest.clone());
    let others = events.iter().any(|e| e.kind == "learn" && e.digest == digest && e.actor != actor && ev.is_honest(&e.actor));
    if !others {
        return None;
    }
    for e in events.iter_mut().filter(|e| e.kind == "learn" && e.actor == actor && e.digest == digest) {
        e.tick = e.tick.checked_sub(delta + 1)?;
    }
    Some(rebuild(events, ev.blocks.clone()))
}

/// Corrupts the data slot of the first committed state. Trips data availability.
pub fn corrupt_commitment(ev: &Evidence) -> Option<Evidence> {
    let mut blocks = ev.blocks.clone();
    let c = blocks.iter_mut().flat_map(|b| b.txs.iter_mut()).find_map(|tx| match &mut tx.payload {
        TxPayload::Commit { new_states, .. } => new_states.first_mut(),
        _ => None,
    })?;
    let byte = c.data_ct.0.last_mut()?;
    *byte ^= 0x01;
    Some(rebuild(ev.trace.events.clone(), blocks))
}

/// Reopens a terminal proposal. Trips the status machine.
pub fn regress_status(ev: &Evidence) -> Option<Evidence> {
    let mut events = ev.trace.events.clone();
    let i = events.iter().rposition(|e| e.kind == "status" && e.data_str("to").is_some_and(|t| t != "PROPOSED"))?;
    let mut back = events[i].clone();
    back.data["from"] = back.data["to"].clone();
    back.data["to"] = json!("PROPOSED");
    events.insert(i + 1, back);
    Some(rebuild(events, ev.blocks.clone()))
}

/// The mutation aimed at each checker.
pub fn for_check(name: &str, ev: &Evidence) -> Option<Evidence> {
    match name {
        "correctness" => tamper_return(ev),
        "data_availability" => corrupt_commitment(ev),
        "financial_fairness" => faulty_punish(ev),
        "delivery_fairness" => early_leak(ev, ev.scenario.network.delta),
        "delivery_atomicity" => inject_leak(ev),
        "status_machine" => regress_status(ev),
        _ => None,
    }
}
