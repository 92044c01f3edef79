//! MPT applications: policy-governed deterministic transition functions.

mod erc20;
mod oracle;
mod policy;
mod scores;
mod supply_chain;
mod value;
mod yundou;

use std::collections::BTreeSet;

pub use policy::{Owner, Policy, PolicyError, SettlementRule, VarDecl};
pub use value::Value;

use crate::crypto::{hash_parts, Address, Digest};

/// Access to the parties, parameters and states of one evaluation. Every state access is
/// recorded so that it can be compared against the policy.
pub struct EvalCtx<'a> {
    parties: &'a [Address],
    params: &'a [Value],
    states: Vec<Value>,
    default_state: Value,
    returns: Vec<Vec<(String, Value)>>,
    reads: BTreeSet<(usize, String)>,
    writes: BTreeSet<(usize, String)>,
}

impl<'a> EvalCtx<'a> {
    pub fn n(&self) -> usize {
        self.parties.len()
    }

    pub fn party(&self, i: usize) -> &Address {
        &self.parties[i]
    }

    pub fn index_of(&self, a: &Address) -> Option<usize> {
        self.parties.iter().position(|p| p == a)
    }

    pub fn param(&self, i: usize, id: &str) -> &Value {
        self.params[i].field(id).unwrap_or(&Value::Unit)
    }

    pub fn state(&mut self, i: usize, id: &str) -> Value {
        self.reads.insert((i, id.to_string()));
        self.states[i]
            .field(id)
            .or_else(|| self.default_state.field(id))
            .cloned()
            .unwrap_or(Value::Unit)
    }

    pub fn uint_state(&mut self, i: usize, id: &str) -> u64 {
        self.state(i, id).as_uint().unwrap_or(0)
    }

    pub fn set_state(&mut self, i: usize, id: &str, v: Value) {
        self.writes.insert((i, id.to_string()));
        self.states[i] = self.states[i].with_field(id, v);
    }

    pub fn set_return(&mut self, i: usize, id: &str, v: Value) {
        self.returns[i].push((id.to_string(), v));
    }
}

/// Outputs `(s', r)` plus the recorded accesses.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Evaluation {
    pub new_states: Vec<Value>,
    pub returns: Vec<Value>,
    pub reads: BTreeSet<(usize, String)>,
    pub writes: BTreeSet<(usize, String)>,
}

pub type TransitionFn = fn(&mut EvalCtx<'_>);

pub struct App {
    pub name: &'static str,
    /// Registry namespace holding the app's state commitments.
    pub namespace: &'static str,
    pub policy: Policy,
    pub transition: TransitionFn,
    pub default_state: Value,
}

impl App {
    pub fn f_hash(&self) -> Digest {
        function_hash(self.name)
    }

    pub fn p_hash(&self) -> Digest {
        self.policy.p_hash()
    }

    /// `F_P(s, x)`. `states` and `params` are indexed like `parties`. Missing state fields
    /// read as the app default, returns not set by the function default to unit.
    pub fn evaluate(&self, parties: &[Address], states: &[Value], params: &[Value]) -> Evaluation {
        assert_eq!(parties.len(), states.len());
        assert_eq!(parties.len(), params.len());
        let mut ctx = EvalCtx {
            parties,
            params,
            states: states.to_vec(),
            default_state: self.default_state.clone(),
            returns: vec![Vec::new(); parties.len()],
            reads: BTreeSet::new(),
            writes: BTreeSet::new(),
        };
        (self.transition)(&mut ctx);
        let returns = ctx
            .returns
            .iter()
            .zip(parties)
            .map(|(set, p)| {
                let declared = self.policy.return_ids(p);
                Value::record(declared.iter().map(|id| {
                    let v = set.iter().rev().find(|(k, _)| k == id).map(|(_, v)| v.clone());
                    (id.to_string(), v.unwrap_or(Value::Unit))
                }))
            })
            .collect();
        Evaluation { new_states: ctx.states, returns, reads: ctx.reads, writes: ctx.writes }
    }

    /// Wrap a bare value as the record of a single-parameter policy.
    pub fn normalize_param(&self, party: &Address, x: Value) -> Value {
        let ids = self.policy.param_ids(party);
        match (&x, ids.as_slice()) {
            (Value::Record(_), _) if x.field_names() == ids => x,
            (_, [only]) => Value::record([(*only, x)]),
            _ => x,
        }
    }
}

impl std::fmt::Debug for App {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("App").field("name", &self.name).field("namespace", &self.namespace).finish()
    }
}

pub fn function_hash(name: &str) -> Digest {
    hash_parts(&[b"decloak/function", name.as_bytes()])
}

fn per_party(ids: &[&str]) -> Vec<VarDecl> {
    ids.iter().map(|id| VarDecl::unsettled(id)).collect()
}

pub(crate) fn policy(
    function: &str,
    params: &[&str],
    state: &[&str],
    returns: &[&str],
    min_parties: usize,
) -> Policy {
    Policy {
        function: function.to_string(),
        params: per_party(params),
        reads: per_party(state),
        writes: per_party(state),
        returns: per_party(returns),
        settlement: SettlementRule { min_parties },
    }
}

pub const APP_NAMES: [&str; 7] = [
    "supply_chain",
    "scores_mean",
    "erc20_transfer",
    "erc20_approved_transfer",
    "erc20_batch_transfer",
    "yundou_vote_transfer",
    "oracle_random",
];

/// Build an app by name with the given settlement threshold.
pub fn app(name: &str, min_parties: usize) -> Option<App> {
    Some(match name {
        "supply_chain" => supply_chain::app(min_parties),
        "scores_mean" => scores::app(min_parties),
        "erc20_transfer" => erc20::transfer(min_parties),
        "erc20_approved_transfer" => erc20::approved_transfer(min_parties),
        "erc20_batch_transfer" => erc20::batch_transfer(min_parties),
        "yundou_vote_transfer" => yundou::vote_transfer(min_parties),
        "oracle_random" => oracle::random(min_parties),
        _ => return None,
    })
}

pub fn namespace_of(name: &str) -> Option<&'static str> {
    app(name, 1).map(|a| a.namespace)
}
