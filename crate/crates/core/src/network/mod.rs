//! The simulated deployment: scenario configuration, actors, scheduler and trace.

mod executor;
mod msg;
mod party;
mod scenario;
mod sim;
mod trace;

pub use msg::Msg;
pub use scenario::{
    ActorSpec, Behavior, ChainSection, ConfigError, ContractSection, NetworkSection, ProposalSpec, Role,
    Scenario, ScenarioError, SettlementSpec,
};
pub use sim::{actor_seed, genesis_contract, genesis_keygen_seed, run, Directory, RunResult, Sim};
pub use trace::{Event, Trace};
