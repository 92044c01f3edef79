use crate::chain::Transaction;
use crate::crypto::{Canonical, Encoder};
use crate::enclave::{Announcement, NetworkSigned, Sealed, Settlement};
use crate::protocol::Proposal;

/// Off-chain messages between actors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Msg {
    /// Initiator to the specified enclave.
    Propose(Proposal),
    Announce(NetworkSigned<Announcement>),
    Ack(Sealed),
    Settle(NetworkSigned<Settlement>),
    Input(Sealed),
    /// A `TX_com` handed directly to its owners.
    Keys(Transaction),
}

impl Msg {
    pub fn kind(&self) -> &'static str {
        match self {
            Msg::Propose(_) => "propose",
            Msg::Announce(_) => "announce",
            Msg::Ack(_) => "ack",
            Msg::Settle(_) => "settle",
            Msg::Input(_) => "input",
            Msg::Keys(_) => "keys",
        }
    }
}

impl Canonical for Msg {
    fn encode(&self, enc: &mut Encoder) {
        enc.put_str(self.kind());
        match self {
            Msg::Propose(p) => enc.put(p),
            Msg::Announce(a) => enc.put(a),
            Msg::Ack(s) | Msg::Input(s) => enc.put(s),
            Msg::Settle(s) => enc.put(s),
            Msg::Keys(tx) => enc.put(tx),
        };
    }
}
