pub mod apps;
pub mod chain;
pub mod contract;
pub mod crypto;
pub mod enclave;
pub mod harness;
pub mod network;
pub mod protocol;
