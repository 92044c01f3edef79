//! Offline checks over a finished run: the trace, the block list and the scenario
//! recorded in the trace's `config` event. Nothing here touches a live enclave.

mod checks;
pub mod corpus;
mod gas;
pub mod mutate;
mod oracle;

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use crate::chain::Block;
use crate::crypto::{Address, Digest};
use crate::network::{Event, RunResult, Scenario, Trace};
use crate::protocol::ProposalStatus;

pub use checks::{
    check_all, check_correctness, check_data_availability, check_delivery_atomicity,
    check_delivery_fairness, check_financial_fairness, check_status_machine, CheckReport, Verdict,
    CHECKS,
};
pub use gas::{gas_report, GasReport, GasTable, ProposalGas, TxLine};
pub use oracle::{reconstruct, replay, Expected, Reconstructed};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("trace has no config event")]
    NoConfig,
    #[error("config event does not hold a scenario: {0}")]
    BadConfig(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

/// A finished run as the checkers see it.
#[derive(Clone, Debug)]
pub struct Evidence {
    pub trace: Trace,
    pub blocks: Vec<Block>,
    pub scenario: Scenario,
    pub names: BTreeMap<Address, String>,
    /// Proposal id to scenario index, from the trace and the chain.
    pub ids: BTreeMap<Digest, usize>,
}

impl Evidence {
    pub fn new(trace: Trace, blocks: Vec<Block>) -> Result<Evidence, HarnessError> {
        let config = trace.of_kind("config").next().ok_or(HarnessError::NoConfig)?;
        let raw = config.data.get("scenario").cloned().ok_or(HarnessError::NoConfig)?;
        let scenario: Scenario = serde_json::from_value(raw).map_err(|e| HarnessError::BadConfig(e.to_string()))?;
        let names = scenario.actors.iter().map(|a| (scenario.account(&a.name).ad, a.name.clone())).collect();
        let mut ids = BTreeMap::new();
        for e in &trace.events {
            if let (Some(d), Some(i)) = (Digest::from_hex(&e.digest), e.data_u64("index")) {
                if matches!(e.kind.as_str(), "proposal" | "status") {
                    ids.insert(d, i as usize);
                }
            }
        }
        for b in &blocks {
            for tx in &b.txs {
                if let crate::chain::TxPayload::ChallengeTee { proposal } | crate::chain::TxPayload::Commit { proposal, .. } =
                    &tx.payload
                {
                    ids.entry(proposal.id()).or_insert(proposal.nonce as usize);
                }
            }
        }
        Ok(Evidence { trace, blocks, scenario, names, ids })
    }

    pub fn from_run(run: &RunResult) -> Evidence {
        Evidence::new(run.trace.clone(), run.blocks().to_vec()).expect("simulator traces carry their config")
    }

    /// Loads a trace file and the matching chain dump (a JSON array of blocks).
    pub fn load(trace_path: &Path, chain_path: &Path) -> Result<Evidence, HarnessError> {
        let io = |p: &Path, m: String| HarnessError::Io { path: p.display().to_string(), message: m };
        let f = File::open(trace_path).map_err(|e| io(trace_path, e.to_string()))?;
        let trace = Trace::read_jsonl(BufReader::new(f)).map_err(|e| io(trace_path, e))?;
        let f = File::open(chain_path).map_err(|e| io(chain_path, e.to_string()))?;
        let blocks = serde_json::from_reader(BufReader::new(f)).map_err(|e| io(chain_path, e.to_string()))?;
        Evidence::new(trace, blocks)
    }

    /// Writes the trace as JSONL and the blocks as a JSON array.
    pub fn save(&self, trace_path: &Path, chain_path: &Path) -> Result<(), HarnessError> {
        let io = |p: &Path, e: std::io::Error| HarnessError::Io { path: p.display().to_string(), message: e.to_string() };
        std::fs::write(trace_path, self.trace.to_jsonl()).map_err(|e| io(trace_path, e))?;
        let json = serde_json::to_vec(&self.blocks).expect("blocks serialize");
        std::fs::write(chain_path, json).map_err(|e| io(chain_path, e))
    }

    pub fn name_of(&self, a: &Address) -> String {
        self.names.get(a).cloned().unwrap_or_else(|| a.to_hex())
    }

    pub fn is_honest(&self, name: &str) -> bool {
        self.scenario.actors.iter().any(|a| a.name == name && a.behavior.is_honest())
    }

    pub fn index_of(&self, e: &Event) -> Option<usize> {
        e.data_u64("index").map(|i| i as usize).or_else(|| Digest::from_hex(&e.digest).and_then(|d| self.ids.get(&d).copied()))
    }

    pub fn id_of(&self, index: usize) -> Option<Digest> {
        self.ids.iter().find(|(_, &i)| i == index).map(|(d, _)| *d)
    }

    /// Final status of proposal `index`, `None` if it never reached the chain.
    pub fn final_status(&self, index: usize) -> Option<ProposalStatus> {
        let from_end = self
            .trace
            .of_kind("end")
            .next()
            .and_then(|e| e.data.get("statuses")?.get(index)?.as_str().map(str::to_string));
        match from_end {
            Some(s) => ProposalStatus::parse(&s),
            None => self
                .trace
                .of_kind("status")
                .filter(|e| self.index_of(e) == Some(index))
                .last()
                .and_then(|e| e.data_str("to").and_then(ProposalStatus::parse)),
        }
    }

    /// Event index of the `end` event, or the last event.
    pub fn anchor(&self) -> usize {
        self.event_index("end").unwrap_or(self.trace.events.len().saturating_sub(1))
    }

    pub fn event_index(&self, kind: &str) -> Option<usize> {
        self.trace.events.iter().position(|e| e.kind == kind)
    }

    /// Event index of the `block` event for `height`.
    pub fn block_event(&self, height: u64) -> Option<usize> {
        self.trace.events.iter().position(|e| e.kind == "block" && e.height == height)
    }

    pub fn balances(&self, which: &str) -> Option<(usize, BTreeMap<String, u64>)> {
        let i = match which {
            "end" => self.event_index("end")?,
            note => self.trace.events.iter().position(|e| e.kind == "balances" && e.note == note)?,
        };
        let m = self.trace.events[i].data.get("balances")?.as_object()?;
        Some((i, m.iter().filter_map(|(k, v)| Some((k.clone(), v.as_u64()?))).collect()))
    }
}
