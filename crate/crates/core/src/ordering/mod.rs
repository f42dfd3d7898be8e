//! Ordering service: Raft-replicated total order, block cutting and block
//! delivery, plus the seeded network the replicas talk over.

pub mod cutter;
pub mod orderer;
pub mod raft;
pub mod simnet;

pub use cutter::{cut_block, BlockCutConfig, PendingTx};
pub use orderer::{Orderer, OrdererOutput, DELIVERY_WINDOW};
pub use raft::{EntryPayload, LogEntry, NodeId, RaftMessage, RaftNode, RaftRole, RaftTiming, SubmitResult};
pub use simnet::{NetStats, NodeAddr, Partition, SimNet, SimNetConfig};
