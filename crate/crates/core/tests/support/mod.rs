#![allow(dead_code)]

pub mod oracles;

use std::path::Path;

use decloak::chain::{Block, TxPayload};
use decloak::crypto::{attach_key_slot, derive_shared, open_with_data_key, unwrap_data_key, Commitment, Digest, PublicKey};
use decloak::harness::corpus;
use decloak::network::{run, RunResult, Scenario};

pub struct Entry {
    pub label: String,
    pub scenario: Scenario,
    pub run: RunResult,
    /// Actor that must be punished if the proposal aborts (scripted byzantine cases).
    pub culprit: Option<String>,
    pub kind: &'static str,
}

pub fn scripted() -> Vec<Scenario> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut files: Vec<_> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    files
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e == "toml"))
        .map(|p| Scenario::from_toml_str(&std::fs::read_to_string(&p).unwrap()).unwrap_or_else(|e| panic!("{}: {e}", p.display())))
        .collect()
}

pub fn entry(scenario: Scenario, kind: &'static str, culprit: Option<String>) -> Entry {
    let run = run(&scenario);
    Entry { label: scenario.name.clone(), scenario, run, culprit, kind }
}

pub fn byzantine_runs(count: u64) -> Vec<Entry> {
    (0..count)
        .map(|seed| {
            let kind = corpus::BYZANTINE[(seed % corpus::BYZANTINE.len() as u64) as usize];
            let (sc, culprit) = corpus::byzantine(kind, 1000 + seed);
            entry(sc, kind, culprit)
        })
        .collect()
}

pub fn is_all_honest(sc: &Scenario) -> bool {
    sc.actors.iter().all(|a| a.behavior.is_honest())
}

/// Accepted protocol transactions per proposal id, in chain order.
pub fn protocol_txs(blocks: &[Block], id: &Digest) -> (Vec<&'static str>, usize) {
    let mut ok = Vec::new();
    let mut rejected = 0;
    for b in blocks {
        for (tx, r) in b.entries() {
            if tx.payload.proposal_id().as_ref() == Some(id) {
                if r.ok {
                    ok.push(tx.kind().as_str());
                } else {
                    rejected += 1;
                }
            }
        }
    }
    (ok, rejected)
}

/// A slot recovered twice from chain data.
pub struct Recovered {
    pub owner_name: String,
    pub what: &'static str,
    pub via_party: Option<Vec<u8>>,
    pub via_network: Option<Vec<u8>>,
}

fn open_with(shared: Option<decloak::crypto::SymmetricKey>, c: &Commitment) -> Option<Vec<u8>> {
    let shared = shared?;
    let k = unwrap_data_key(&shared, c).ok()?;
    open_with_data_key(&k, c).ok()
}

/// Reconstructs every output of every completed proposal from `blocks` and two key
/// sources: each owner's own secret key with the network public key, and the network
/// secret key with the owner's public key as registered on chain.
pub fn reconstruct_all(sc: &Scenario, blocks: &[Block]) -> Vec<(Digest, Vec<Recovered>)> {
    let network = sc.network_account();
    let registered = |addr: &decloak::crypto::Address| -> Option<PublicKey> {
        blocks.iter().flat_map(|b| b.entries()).find_map(|(tx, r)| match &tx.payload {
            TxPayload::Register { pk } if r.ok && &tx.sender == addr => Some(*pk),
            _ => None,
        })
    };
    let accepted = || blocks.iter().flat_map(|b| b.entries()).filter(|(_, r)| r.ok).map(|(tx, _)| tx);
    let mut out = Vec::new();
    for com in accepted() {
        let TxPayload::Complete { id_p, state_keys, return_keys } = &com.payload else { continue };
        let cmt = accepted()
            .find(|tx| matches!(&tx.payload, TxPayload::Commit { proposal, .. } if proposal.id() == *id_p))
            .expect("completed proposals have a commit");
        let TxPayload::Commit { new_states, returns, .. } = &cmt.payload else { unreachable!() };
        let mut slots = Vec::new();
        for (what, cs, keys) in [("state", new_states, state_keys), ("return", returns, return_keys)] {
            for (c, k) in cs.iter().zip(keys) {
                let full = attach_key_slot(c, k.clone());
                let owner = sc.actors.iter().find(|a| sc.account(&a.name).ad == c.owner).expect("owner is an actor");
                let acct = sc.account(&owner.name);
                let via_party = open_with(derive_shared(&acct.sk, &network.pk).ok(), &full);
                let via_network = registered(&c.owner).and_then(|pk| open_with(derive_shared(&network.sk, &pk).ok(), &full));
                slots.push(Recovered { owner_name: owner.name.clone(), what, via_party, via_network });
            }
        }
        out.push((*id_p, slots));
    }
    out
}
