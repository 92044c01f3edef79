//! Table-driven gas accounting for the protocol's transactions.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::chain::{Block, TxKind};
use crate::crypto::Digest;

/// Gas per transaction kind, keyed by contract function name.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct GasTable(pub BTreeMap<String, u64>);

const DEFAULTS: [(&str, u64); 11] = [
    ("register", 127_068),
    ("deposit", 42_325),
    ("commit", 104_568),
    ("complete", 110_570),
    ("challengeTEE", 131_762),
    ("acknowledge", 26_999),
    ("failNegotiation", 30_563),
    ("challengeParties", 33_786),
    ("partyResponse", 34_313),
    ("punishParties", 45_518),
    ("punishTEE", 53_254),
];

impl Default for GasTable {
    fn default() -> Self {
        GasTable(DEFAULTS.iter().map(|(k, v)| (k.to_string(), *v)).collect())
    }
}

impl GasTable {
    pub fn gas(&self, kind: TxKind) -> u64 {
        self.0.get(kind.function()).copied().unwrap_or(0)
    }

    /// Parses `function = gas` lines over the defaults. `#` starts a comment.
    pub fn parse(text: &str) -> Result<GasTable, String> {
        let mut table = GasTable::default();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .or_else(|| line.split_once(char::is_whitespace))
                .ok_or_else(|| format!("line {}: expected `name = gas`", i + 1))?;
            let (k, v) = (k.trim(), v.trim());
            if !table.0.contains_key(k) {
                return Err(format!("line {}: unknown transaction kind `{k}`", i + 1));
            }
            let gas = v.parse().map_err(|_| format!("line {}: `{v}` is not a gas amount", i + 1))?;
            table.0.insert(k.to_string(), gas);
        }
        Ok(table)
    }

    pub fn to_text(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct TxLine {
    pub height: u64,
    pub kind: String,
    pub sender: String,
    pub gas: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ProposalGas {
    pub id_p: String,
    pub txs: Vec<TxLine>,
    /// Transactions the contract rejected; not counted in the totals.
    pub rejected: Vec<TxLine>,
    pub counts: BTreeMap<String, u64>,
    pub total: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct GasReport {
    pub setup_counts: BTreeMap<String, u64>,
    pub setup_total: u64,
    pub proposals: Vec<ProposalGas>,
}

/// Accounts every accepted transaction in `blocks`. `name_of` maps senders to labels.
pub fn gas_report(blocks: &[Block], table: &GasTable, name_of: impl Fn(&crate::crypto::Address) -> String) -> GasReport {
    let mut report = GasReport::default();
    let mut by_id: BTreeMap<Digest, usize> = BTreeMap::new();
    for b in blocks {
        for (tx, r) in b.entries() {
            let kind = tx.kind();
            let line =
                TxLine { height: b.height(), kind: kind.function().to_string(), sender: name_of(&tx.sender), gas: table.gas(kind) };
            match tx.payload.proposal_id() {
                None => {
                    if r.ok {
                        *report.setup_counts.entry(line.kind.clone()).or_default() += 1;
                        report.setup_total += line.gas;
                    }
                }
                Some(id) => {
                    let i = *by_id.entry(id).or_insert_with(|| {
                        report.proposals.push(ProposalGas { id_p: id.to_hex(), ..Default::default() });
                        report.proposals.len() - 1
                    });
                    let p = &mut report.proposals[i];
                    if r.ok {
                        *p.counts.entry(line.kind.clone()).or_default() += 1;
                        p.total += line.gas;
                        p.txs.push(line);
                    } else {
                        p.rejected.push(line);
                    }
                }
            }
        }
    }
    report
}

impl GasReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "setup: {} gas", self.setup_total);
        for (k, n) in &self.setup_counts {
            let _ = writeln!(out, "  {k} x{n}");
        }
        for p in &self.proposals {
            let _ = writeln!(out, "proposal {}: {} txs, {} gas", &p.id_p[..16], p.txs.len(), p.total);
            for t in &p.txs {
                let _ = writeln!(out, "  h{:<4} {:<17} {:<6} {}", t.height, t.kind, t.sender, t.gas);
            }
            for t in &p.rejected {
                let _ = writeln!(out, "  h{:<4} {:<17} {:<6} rejected", t.height, t.kind, t.sender);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let t = GasTable::default();
        assert_eq!(t.gas(TxKind::Cmt) + t.gas(TxKind::Com), 215_138);
        let t = GasTable::parse("# doubled\ncommit = 209136\ncomplete 221140\n").unwrap();
        assert_eq!(t.gas(TxKind::Cmt) + t.gas(TxKind::Com), 430_276);
        assert_eq!(t.gas(TxKind::Register), 127_068);
        assert!(GasTable::parse("bogus = 1").unwrap_err().contains("line 1"));
        assert!(GasTable::parse("\ncommit = lots").unwrap_err().contains("line 2"));
        assert_eq!(GasTable::parse(&t.to_text()).unwrap(), t);
    }
}
