use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::Value;
use crate::crypto::{hash, Address, Canonical, Digest, Encoder};

/// Owner of a policy variable: a known party, or `P?` to be bound at settlement.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Owner {
    Party(Address),
    Unsettled,
}

impl Serialize for Owner {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            Owner::Party(a) => a.serialize(s),
            Owner::Unsettled => s.serialize_str("P?"),
        }
    }
}

impl<'de> Deserialize<'de> for Owner {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        if s == "P?" {
            return Ok(Owner::Unsettled);
        }
        Address::from_hex(&s)
            .map(Owner::Party)
            .ok_or_else(|| serde::de::Error::custom(format!("bad owner {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VarDecl {
    pub id: String,
    pub owner: Owner,
}

impl VarDecl {
    pub fn unsettled(id: &str) -> Self {
        VarDecl { id: id.to_string(), owner: Owner::Unsettled }
    }

    pub fn owned(id: &str, owner: Address) -> Self {
        VarDecl { id: id.to_string(), owner: Owner::Party(owner) }
    }

    fn applies_to(&self, party: &Address) -> bool {
        match &self.owner {
            Owner::Unsettled => true,
            Owner::Party(a) => a == party,
        }
    }
}

impl Canonical for VarDecl {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(&self.id);
        match &self.owner {
            Owner::Unsettled => enc.put_u8(0),
            Owner::Party(a) => enc.put_u8(1).put(a),
        };
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettlementRule {
    pub min_parties: usize,
}

/// Privacy policy of an MPT function. An unsettled declaration is instantiated once for every
/// settled party; a declaration with a fixed owner belongs to that party alone, which must
/// then be among the settled parties.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Policy {
    pub function: String,
    pub params: Vec<VarDecl>,
    pub reads: Vec<VarDecl>,
    pub writes: Vec<VarDecl>,
    pub returns: Vec<VarDecl>,
    pub settlement: SettlementRule,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PolicyError {
    #[error("variable id {0:?} must match [A-Za-z0-9]+")]
    BadIdentifier(String),
    #[error("variable {0:?} declared twice for the same owner in {1}")]
    Duplicate(String, &'static str),
    #[error("settlement needs at least one party")]
    EmptySettlement,
    #[error("written variable {0:?} is not readable by its owner")]
    WriteWithoutRead(String),
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.bytes().all(|b| b.is_ascii_alphanumeric())
}

impl Policy {
    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.settlement.min_parties == 0 {
            return Err(PolicyError::EmptySettlement);
        }
        for (name, list) in [
            ("params", &self.params),
            ("reads", &self.reads),
            ("writes", &self.writes),
            ("returns", &self.returns),
        ] {
            let mut seen = BTreeSet::new();
            for d in list {
                if !valid_id(&d.id) {
                    return Err(PolicyError::BadIdentifier(d.id.clone()));
                }
                if !seen.insert((&d.id, &d.owner)) {
                    return Err(PolicyError::Duplicate(d.id.clone(), name));
                }
            }
        }
        for w in &self.writes {
            if !self.reads.iter().any(|r| r.id == w.id && (r.owner == w.owner || r.owner == Owner::Unsettled)) {
                return Err(PolicyError::WriteWithoutRead(w.id.clone()));
            }
        }
        Ok(())
    }

    pub fn p_hash(&self) -> Digest {
        hash(self)
    }

    pub fn fixed_owners(&self) -> BTreeSet<Address> {
        [&self.params, &self.reads, &self.writes, &self.returns]
            .into_iter()
            .flatten()
            .filter_map(|d| match &d.owner {
                Owner::Party(a) => Some(a.clone()),
                Owner::Unsettled => None,
            })
            .collect()
    }

    /// Bind the joiners into a settled party list (address order), or `None` if the
    /// settlement rule cannot be met.
    pub fn settle(&self, joiners: &BTreeSet<Address>) -> Option<Vec<Address>> {
        if joiners.len() < self.settlement.min_parties {
            return None;
        }
        if !self.fixed_owners().is_subset(joiners) {
            return None;
        }
        Some(joiners.iter().cloned().collect())
    }

    pub fn param_ids(&self, party: &Address) -> Vec<&str> {
        ids_for(&self.params, party)
    }

    pub fn read_ids(&self, party: &Address) -> Vec<&str> {
        ids_for(&self.reads, party)
    }

    pub fn write_ids(&self, party: &Address) -> Vec<&str> {
        ids_for(&self.writes, party)
    }

    pub fn return_ids(&self, party: &Address) -> Vec<&str> {
        ids_for(&self.returns, party)
    }

    /// A party's parameter must be a record with exactly its declared fields.
    pub fn params_conform(&self, party: &Address, x: &Value) -> bool {
        matches!(x, Value::Record(_)) && x.field_names() == self.param_ids(party)
    }
}

fn ids_for<'a>(list: &'a [VarDecl], party: &Address) -> Vec<&'a str> {
    let mut ids: Vec<&str> = list.iter().filter(|d| d.applies_to(party)).map(|d| d.id.as_str()).collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

impl Canonical for Policy {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str("decloak/policy")
            .put_str(&self.function)
            .put_seq(&self.params)
            .put_seq(&self.reads)
            .put_seq(&self.writes)
            .put_seq(&self.returns)
            .put_u64(self.settlement.min_parties as u64);
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", serde_json::to_string(self).map_err(|_| fmt::Error)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn addr(b: u8) -> Address {
        Address::from_bytes(vec![b; 20])
    }

    fn sample(min: usize) -> Policy {
        Policy {
            function: "f".into(),
            params: vec![VarDecl::unsettled("bid")],
            reads: vec![VarDecl::unsettled("balance")],
            writes: vec![VarDecl::unsettled("balance")],
            returns: vec![VarDecl::unsettled("won"), VarDecl::owned("log", addr(9))],
            settlement: SettlementRule { min_parties: min },
        }
    }

    #[test]
    fn validation() {
        assert!(sample(2).validate().is_ok());
        let mut p = sample(2);
        p.params.push(VarDecl::unsettled("bad-id"));
        assert_eq!(p.validate(), Err(PolicyError::BadIdentifier("bad-id".into())));
        let mut p = sample(2);
        p.params.push(VarDecl::unsettled("bid"));
        assert!(matches!(p.validate(), Err(PolicyError::Duplicate(..))));
        assert_eq!(sample(0).validate(), Err(PolicyError::EmptySettlement));
        let mut p = sample(2);
        p.writes.push(VarDecl::unsettled("other"));
        assert!(matches!(p.validate(), Err(PolicyError::WriteWithoutRead(_))));
    }

    #[test]
    fn settlement_requires_count_and_fixed_owners() {
        let p = sample(2);
        let some: BTreeSet<Address> = [addr(1), addr(2)].into();
        assert_eq!(p.settle(&some), None, "fixed owner missing");
        let all: BTreeSet<Address> = [addr(2), addr(9), addr(1)].into();
        assert_eq!(p.settle(&all), Some(vec![addr(1), addr(2), addr(9)]));
        let one: BTreeSet<Address> = [addr(9)].into();
        assert_eq!(p.settle(&one), None);
    }

    #[test]
    fn per_party_ids() {
        let p = sample(1);
        assert_eq!(p.return_ids(&addr(9)), vec!["log", "won"]);
        assert_eq!(p.return_ids(&addr(1)), vec!["won"]);
        assert!(p.params_conform(&addr(1), &Value::record([("bid", Value::Uint(3))])));
        assert!(!p.params_conform(&addr(1), &Value::Uint(3)));
        assert!(!p.params_conform(&addr(1), &Value::record([("bad", Value::Uint(3))])));
    }

    #[test]
    fn json_round_trip_and_hash() {
        let p = sample(3);
        let back: Policy = serde_json::from_str(&p.to_string()).unwrap();
        assert_eq!(back, p);
        assert_eq!(back.p_hash(), p.p_hash());
        assert_ne!(sample(2).p_hash(), p.p_hash());
    }
}
