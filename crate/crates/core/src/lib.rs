//! Broker core for a photo-trading pub/sub platform built on a small
//! permissioned ledger.

pub mod chaincode;
pub mod codec;
pub mod config;
pub mod endorsement;
pub mod identity;
pub mod ledger;
pub mod network;
pub mod ordering;
pub mod pubsub;
pub mod validation;

pub use codec::Hash256;
pub use config::{ConfigError, NetworkConfig};
pub use identity::{Identity, KeyPair, Msp, Role};
pub use ledger::{Block, ChannelId, ChannelLedger, Transaction, ValidationFlag};
pub use network::{Client, Committed, FaultAction, Network, PipelineError};
