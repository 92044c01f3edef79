//! Expected outputs straight from the app functions, and state recovery from chain data.

use std::collections::BTreeMap;

use super::Evidence;
use crate::apps::{self, Value};
use crate::chain::{Block, Transaction, TxPayload};
use crate::crypto::{attach_key_slot, open_commitment, Address, Commitment, Digest, PublicKey};

/// What a proposal should have produced, per settled party.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Expected {
    pub index: usize,
    pub parties: Vec<Address>,
    pub states: Vec<Value>,
    pub returns: Vec<Value>,
}

/// Accepted transactions of `kind` for `id_p`, with their heights.
pub(crate) fn accepted<'a>(blocks: &'a [Block], id_p: &Digest, kind: crate::chain::TxKind) -> Vec<(u64, &'a Transaction)> {
    blocks
        .iter()
        .flat_map(|b| b.entries().map(move |(tx, r)| (b.height(), tx, r.ok)))
        .filter(|(_, tx, ok)| *ok && tx.kind() == kind && tx.payload.proposal_id().as_ref() == Some(id_p))
        .map(|(h, tx, _)| (h, tx))
        .collect()
}

pub(crate) fn cmt_of<'a>(blocks: &'a [Block], id_p: &Digest) -> Option<(u64, &'a Transaction)> {
    accepted(blocks, id_p, crate::chain::TxKind::Cmt).into_iter().next()
}

/// Replays every completed proposal in chain order through the plain app functions.
/// States start from the scenario's genesis state or the app default.
pub fn replay(ev: &Evidence) -> Result<BTreeMap<Digest, Expected>, String> {
    let sc = &ev.scenario;
    let mut current: BTreeMap<(String, Address), Value> = BTreeMap::new();
    let mut out = BTreeMap::new();
    let completes = ev.blocks.iter().flat_map(|b| b.entries()).filter(|(tx, r)| r.ok && matches!(tx.payload, TxPayload::Complete { .. }));
    for (tx, _) in completes {
        let id_p = tx.payload.proposal_id().expect("complete names a proposal");
        let (_, cmt) = cmt_of(&ev.blocks, &id_p).ok_or_else(|| format!("no accepted commit for {}", id_p.short()))?;
        let TxPayload::Commit { proposal, new_states, .. } = &cmt.payload else { unreachable!() };
        let index = proposal.nonce as usize;
        let spec = sc.proposals.get(index).ok_or_else(|| format!("commit names unknown proposal {index}"))?;
        let app = apps::app(&spec.app, spec.settlement.min_parties).ok_or_else(|| format!("unknown app {}", spec.app))?;
        let parties: Vec<Address> = new_states.iter().map(|c| c.owner.clone()).collect();
        let mut states = Vec::new();
        let mut params = Vec::new();
        for a in &parties {
            let name = ev.name_of(a);
            let key = (app.namespace.to_string(), a.clone());
            let s = current
                .get(&key)
                .cloned()
                .or_else(|| sc.initial_state(app.namespace, &name))
                .unwrap_or_else(|| app.default_state.clone());
            states.push(s);
            params.push(sc.input_of(index, &name).ok_or_else(|| format!("{name} settled on proposal {index} without an input"))?);
        }
        let result = app.evaluate(&parties, &states, &params);
        for (a, s) in parties.iter().zip(&result.new_states) {
            current.insert((app.namespace.to_string(), a.clone()), s.clone());
        }
        out.insert(id_p, Expected { index, parties, states: result.new_states, returns: result.returns });
    }
    Ok(out)
}

/// One output recovered twice from chain data: with the owner's key and with the network key.
#[derive(Clone, Debug)]
pub struct Reconstructed {
    pub owner: Address,
    pub what: &'static str,
    pub via_party: Result<Value, String>,
    pub via_network: Result<Value, String>,
}

fn open(sk: &crate::crypto::SecretKey, pk: &PublicKey, c: &Commitment) -> Result<Value, String> {
    let bytes = open_commitment(sk, pk, c).map_err(|e| e.to_string())?;
    Value::from_bytes(&bytes).ok_or_else(|| "not a value encoding".to_string())
}

/// Recovers every new state and return of a completed proposal from the blocks alone.
/// Private keys are regenerated from the scenario seed; public keys come from `TX_register`.
pub fn reconstruct(ev: &Evidence, id_p: &Digest) -> Result<Vec<Reconstructed>, String> {
    let (_, cmt) = cmt_of(&ev.blocks, id_p).ok_or("no accepted commit")?;
    let (_, com) = accepted(&ev.blocks, id_p, crate::chain::TxKind::Com).into_iter().next().ok_or("no accepted completion")?;
    let TxPayload::Commit { new_states, returns, .. } = &cmt.payload else { unreachable!() };
    let TxPayload::Complete { state_keys, return_keys, .. } = &com.payload else { unreachable!() };
    let registered: BTreeMap<&Address, &PublicKey> = ev
        .blocks
        .iter()
        .flat_map(|b| b.entries())
        .filter_map(|(tx, r)| match &tx.payload {
            TxPayload::Register { pk } if r.ok => Some((&tx.sender, pk)),
            _ => None,
        })
        .collect();
    let network = ev.scenario.network_account();
    let mut out = Vec::new();
    for (what, cs, keys) in [("state", new_states, state_keys), ("return", returns, return_keys)] {
        if cs.len() != keys.len() {
            return Err(format!("{} {what} commitments but {} keys", cs.len(), keys.len()));
        }
        for (c, k) in cs.iter().zip(keys) {
            let full = attach_key_slot(c, k.clone());
            let owner = ev.scenario.account(&ev.name_of(&c.owner));
            let via_party = if owner.ad == c.owner {
                open(&owner.sk, &network.pk, &full)
            } else {
                Err("owner is not a scenario actor".into())
            };
            let via_network = match registered.get(&c.owner) {
                Some(pk) => open(&network.sk, pk, &full),
                None => Err("owner never registered".into()),
            };
            out.push(Reconstructed { owner: c.owner.clone(), what, via_party, via_network });
        }
    }
    Ok(out)
}
