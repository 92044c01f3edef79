//! Scenario configuration: chain and network parameters, actors with their
//! behaviors, proposals with per-party inputs, and initial application state.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize};

use crate::apps::{self, Value};
use crate::contract::PunishmentSink;
use crate::crypto::{Account, Address};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainSection {
    #[serde(default = "default_finality")]
    pub finality_depth: u64,
    #[serde(default = "default_block_ticks")]
    pub block_ticks: u64,
    #[serde(default = "default_width")]
    pub address_width: usize,
}

fn default_finality() -> u64 {
    crate::chain::DEFAULT_FINALITY_DEPTH
}
fn default_block_ticks() -> u64 {
    10
}
fn default_width() -> usize {
    crate::crypto::DEFAULT_ADDRESS_WIDTH
}
fn default_delta() -> u64 {
    3
}
fn default_tau_resp() -> u64 {
    crate::contract::DEFAULT_TAU_RESP
}
fn default_deposit() -> u64 {
    1000
}
fn default_one() -> u64 {
    1
}
fn default_fuzz_rate() -> u32 {
    250
}

impl Default for ChainSection {
    fn default() -> Self {
        ChainSection {
            finality_depth: default_finality(),
            block_ticks: default_block_ticks(),
            address_width: default_width(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    #[serde(default = "default_delta")]
    pub delta: u64,
}

impl Default for NetworkSection {
    fn default() -> Self {
        NetworkSection { delta: default_delta() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContractSection {
    #[serde(default = "default_tau_resp")]
    pub tau_resp: u64,
    #[serde(default)]
    pub sink: PunishmentSink,
    /// Coins each actor deposits at setup unless it overrides the amount.
    #[serde(default = "default_deposit")]
    pub deposit: u64,
}

impl Default for ContractSection {
    fn default() -> Self {
        ContractSection { tau_resp: default_tau_resp(), sink: PunishmentSink::default(), deposit: default_deposit() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Party,
    Executor,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Honest,
    /// Never submits its input, off-chain or on-chain.
    WithholdInput,
    /// Submits an input that differs from the one it pledged.
    MismatchInput,
    /// Answers a challenge only once the response deadline has passed.
    LateResponder,
    /// Ignores everything.
    SilentExecutor,
    /// Never submits `TX_com`; optionally hands it to one party after `delay` ticks.
    DropComExecutor {
        #[serde(default)]
        leak_to: Option<String>,
        #[serde(default = "default_one")]
        delay: u64,
    },
    /// Holds `TX_cmt` back for `release_after` ticks, or forever.
    DetainCmtExecutor {
        #[serde(default)]
        release_after: Option<u64>,
    },
    /// Seeded random drops and delays of everything the actor sends after setup.
    Fuzz {
        #[serde(default = "default_fuzz_rate")]
        drop_per_mille: u32,
        #[serde(default)]
        max_delay: u64,
    },
}

impl Behavior {
    pub fn is_honest(&self) -> bool {
        matches!(self, Behavior::Honest)
    }

    pub fn tag(&self) -> &'static str {
        match self {
            Behavior::Honest => "honest",
            Behavior::WithholdInput => "withhold_input",
            Behavior::MismatchInput => "mismatch_input",
            Behavior::LateResponder => "late_responder",
            Behavior::SilentExecutor => "silent_executor",
            Behavior::DropComExecutor { .. } => "drop_com_executor",
            Behavior::DetainCmtExecutor { .. } => "detain_cmt_executor",
            Behavior::Fuzz { .. } => "fuzz",
        }
    }

    fn allowed_for(&self, role: Role) -> bool {
        match self {
            Behavior::Honest | Behavior::Fuzz { .. } => true,
            Behavior::WithholdInput | Behavior::MismatchInput | Behavior::LateResponder => role == Role::Party,
            Behavior::SilentExecutor | Behavior::DropComExecutor { .. } | Behavior::DetainCmtExecutor { .. } => {
                role == Role::Executor
            }
        }
    }
}

impl Default for Behavior {
    fn default() -> Self {
        Behavior::Honest
    }
}

/// Accepts `behavior = "withhold_input"` as well as `behavior = { kind = "...", .. }`.
fn behavior_repr<'de, D: Deserializer<'de>>(d: D) -> Result<Behavior, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Name(String),
        Full(Behavior),
    }
    match Repr::deserialize(d)? {
        Repr::Full(b) => Ok(b),
        Repr::Name(name) => {
            let table = toml::Table::from_iter([("kind".to_string(), toml::Value::String(name.clone()))]);
            Behavior::deserialize(toml::Value::Table(table))
                .map_err(|_| serde::de::Error::custom(format!("unknown behavior `{name}`")))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActorSpec {
    pub name: String,
    pub role: Role,
    #[serde(default, deserialize_with = "behavior_repr")]
    pub behavior: Behavior,
    #[serde(default)]
    pub deposit: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SettlementSpec {
    pub min_parties: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProposalSpec {
    pub app: String,
    pub initiator: String,
    pub q: u64,
    /// Negotiation deadline in blocks after the height at which the proposal is made.
    pub h_neg: u64,
    pub tau_com: u64,
    pub settlement: SettlementSpec,
    #[serde(default)]
    pub start_tick: Option<u64>,
    /// Parties that answer the announcement with a refusal.
    #[serde(default)]
    pub decline: Vec<String>,
    /// Inputs of the joining parties; the bare parameter value or the full parameter record.
    pub inputs: BTreeMap<String, toml::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default = "default_name")]
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    /// Tick budget; derived from the proposals when absent.
    #[serde(default)]
    pub max_ticks: Option<u64>,
    #[serde(default)]
    pub chain: ChainSection,
    #[serde(default)]
    pub network: NetworkSection,
    #[serde(default)]
    pub contract: ContractSection,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub proposals: Vec<ProposalSpec>,
    /// Initial application state: namespace -> party -> state record.
    #[serde(default)]
    pub state: BTreeMap<String, BTreeMap<String, toml::Value>>,
}

fn default_name() -> String {
    "scenario".to_string()
}

/// One validation problem, located by a dotted path into the config.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("{0}")]
    Parse(String),
    #[error("invalid scenario:\n{}", .0.iter().map(|e| format!("  {e}")).collect::<Vec<_>>().join("\n"))]
    Invalid(Vec<ConfigError>),
}

impl Scenario {
    pub fn from_toml_str(text: &str) -> Result<Scenario, ScenarioError> {
        let s: Scenario = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate().map_err(ScenarioError::Invalid)?;
        Ok(s)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn delta(&self) -> u64 {
        self.network.delta
    }

    pub fn block_ticks(&self) -> u64 {
        self.chain.block_ticks
    }

    /// Default start of a proposal: once enough blocks exist for a confirmed state snapshot.
    pub fn start_tick(&self, p: &ProposalSpec) -> u64 {
        p.start_tick.unwrap_or(self.chain.finality_depth.max(2) * self.chain.block_ticks)
    }

    pub fn budget(&self) -> u64 {
        if let Some(t) = self.max_ticks {
            return t;
        }
        let k = self.chain.finality_depth;
        let last = self
            .proposals
            .iter()
            .map(|p| self.start_tick(p) + (p.h_neg + self.contract.tau_resp + p.tau_com + 2 * k + 10) * self.chain.block_ticks)
            .max()
            .unwrap_or(0);
        last.max(4 * self.chain.block_ticks)
    }

    pub fn actor_index(&self, name: &str) -> Option<usize> {
        self.actors.iter().position(|a| a.name == name)
    }

    pub fn executors(&self) -> Vec<usize> {
        (0..self.actors.len()).filter(|&i| self.actors[i].role == Role::Executor).collect()
    }

    pub fn parties(&self) -> Vec<usize> {
        (0..self.actors.len()).filter(|&i| self.actors[i].role == Role::Party).collect()
    }

    pub fn account(&self, name: &str) -> Account {
        Account::from_seed_with_width(format!("{}/actor/{name}", self.seed).as_bytes(), self.chain.address_width)
    }

    pub fn network_account(&self) -> Account {
        Account::from_seed_with_width(format!("{}/network", self.seed).as_bytes(), self.chain.address_width)
    }

    pub fn deposit_of(&self, a: &ActorSpec) -> u64 {
        a.deposit.unwrap_or(self.contract.deposit)
    }

    fn addresses(&self) -> BTreeMap<String, Address> {
        self.actors.iter().map(|a| (a.name.clone(), self.account(&a.name).ad)).collect()
    }

    /// Converts a config value; `@name` strings become actor addresses.
    pub fn to_value(&self, v: &toml::Value) -> Result<Value, String> {
        to_value(v, &self.addresses())
    }

    /// The normalized parameter of `party` for proposal `index`, if it joins.
    pub fn input_of(&self, index: usize, party: &str) -> Option<Value> {
        let p = &self.proposals[index];
        let raw = p.inputs.get(party)?;
        let app = apps::app(&p.app, p.settlement.min_parties)?;
        let v = self.to_value(raw).ok()?;
        Some(app.normalize_param(&self.account(party).ad, v))
    }

    /// Initial state of `party` in `namespace`, if configured.
    pub fn initial_state(&self, namespace: &str, party: &str) -> Option<Value> {
        self.state.get(namespace)?.get(party).and_then(|v| self.to_value(v).ok())
    }

    pub fn validate(&self) -> Result<(), Vec<ConfigError>> {
        let mut errs = Vec::new();
        let mut err = |path: String, message: String| errs.push(ConfigError { path, message });

        if self.chain.finality_depth == 0 {
            err("chain.finality_depth".into(), "must be at least 1".into());
        }
        if self.chain.block_ticks == 0 {
            err("chain.block_ticks".into(), "must be at least 1".into());
        }
        if !(8..=32).contains(&self.chain.address_width) {
            err("chain.address_width".into(), "must be between 8 and 32".into());
        }
        if self.network.delta == 0 {
            err("network.delta".into(), "must be at least 1".into());
        }
        if self.contract.tau_resp == 0 {
            err("contract.tau_resp".into(), "must be at least 1".into());
        }

        let mut names = BTreeSet::new();
        for (i, a) in self.actors.iter().enumerate() {
            let path = format!("actors[{i}]");
            if a.name.is_empty() || a.name.starts_with('@') || a.name.contains(char::is_whitespace) {
                err(format!("{path}.name"), format!("invalid actor name `{}`", a.name));
            }
            if !names.insert(a.name.clone()) {
                err(format!("{path}.name"), format!("duplicate actor `{}`", a.name));
            }
            if !a.behavior.allowed_for(a.role) {
                err(format!("{path}.behavior"), format!("`{}` does not apply to a {:?}", a.behavior.tag(), a.role));
            }
            if let Behavior::DropComExecutor { leak_to: Some(to), .. } = &a.behavior {
                if self.actors.iter().all(|b| &b.name != to || b.role != Role::Party) {
                    err(format!("{path}.behavior.leak_to"), format!("`{to}` is not a party"));
                }
            }
            if let Behavior::Fuzz { drop_per_mille, .. } = &a.behavior {
                if *drop_per_mille > 1000 {
                    err(format!("{path}.behavior.drop_per_mille"), "must be at most 1000".into());
                }
            }
        }
        if self.executors().is_empty() {
            err("actors".into(), "at least one executor is required".into());
        }

        let k = self.chain.finality_depth;
        let is_party = |n: &str| self.actors.iter().any(|a| a.name == n && a.role == Role::Party);
        let addresses = self.addresses();
        for (i, p) in self.proposals.iter().enumerate() {
            let path = format!("proposals[{i}]");
            let Some(app) = apps::app(&p.app, p.settlement.min_parties) else {
                err(format!("{path}.app"), format!("unknown app `{}`; known: {}", p.app, apps::APP_NAMES.join(", ")));
                continue;
            };
            if !is_party(&p.initiator) {
                err(format!("{path}.initiator"), format!("`{}` is not a party", p.initiator));
            }
            if p.q == 0 {
                err(format!("{path}.q"), "collateral must be positive".into());
            }
            if p.h_neg == 0 {
                err(format!("{path}.h_neg"), "must be at least 1".into());
            }
            let min_tau_com = self.contract.tau_resp + 2 * k + 2;
            if p.tau_com < min_tau_com {
                err(
                    format!("{path}.tau_com"),
                    format!("must be at least tau_resp + 2*finality_depth + 2 = {min_tau_com}"),
                );
            }
            if p.settlement.min_parties == 0 {
                err(format!("{path}.settlement.min_parties"), "must be at least 1".into());
            }
            if let Some(t) = p.start_tick {
                if t < 2 * self.chain.block_ticks {
                    err(format!("{path}.start_tick"), "must leave two blocks for setup".into());
                }
            }
            for d in &p.decline {
                if !is_party(d) {
                    err(format!("{path}.decline"), format!("`{d}` is not a party"));
                }
                if p.inputs.contains_key(d) {
                    err(format!("{path}.decline"), format!("`{d}` both declines and has an input"));
                }
            }
            for (name, raw) in &p.inputs {
                let ipath = format!("{path}.inputs.{name}");
                if !is_party(name) {
                    err(ipath, format!("`{name}` is not a party"));
                    continue;
                }
                match to_value(raw, &addresses) {
                    Err(e) => err(ipath, e),
                    Ok(v) => {
                        let ad = &addresses[name];
                        if !app.policy.params_conform(ad, &app.normalize_param(ad, v)) {
                            err(ipath, format!("does not match parameters {:?}", app.policy.param_ids(ad)));
                        }
                    }
                }
            }
        }

        let known_ns: BTreeSet<&str> = apps::APP_NAMES.iter().filter_map(|n| apps::namespace_of(n)).collect();
        for (ns, entries) in &self.state {
            if !known_ns.contains(ns.as_str()) {
                err(format!("state.{ns}"), "unknown namespace".into());
                continue;
            }
            for (name, raw) in entries {
                let path = format!("state.{ns}.{name}");
                if !is_party(name) {
                    err(path, format!("`{name}` is not a party"));
                } else if let Err(e) = to_value(raw, &addresses) {
                    err(path, e);
                }
            }
        }

        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }
}

fn to_value(v: &toml::Value, addresses: &BTreeMap<String, Address>) -> Result<Value, String> {
    Ok(match v {
        toml::Value::Integer(n) => Value::Uint(u64::try_from(*n).map_err(|_| format!("negative integer {n}"))?),
        toml::Value::Boolean(b) => Value::Bool(*b),
        toml::Value::String(s) => {
            if let Some(name) = s.strip_prefix('@') {
                Value::Address(addresses.get(name).cloned().ok_or_else(|| format!("unknown actor `{name}`"))?)
            } else if let Some(h) = s.strip_prefix("0x") {
                Value::Bytes(hex::decode(h).map_err(|e| format!("bad hex: {e}"))?)
            } else {
                Value::Bytes(s.as_bytes().to_vec())
            }
        }
        toml::Value::Array(items) => {
            Value::List(items.iter().map(|i| to_value(i, addresses)).collect::<Result<_, _>>()?)
        }
        toml::Value::Table(t) => {
            let mut fields = Vec::with_capacity(t.len());
            for (k, v) in t {
                fields.push((k.clone(), to_value(v, addresses)?));
            }
            Value::record(fields)
        }
        toml::Value::Float(_) | toml::Value::Datetime(_) => return Err("unsupported value type".into()),
    })
}
