//! Network shape and timing.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::ChannelId;
use crate::ordering::{BlockCutConfig, NodeAddr, RaftTiming, SimNetConfig};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad config: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    /// Endorsing peers; each also commits every channel.
    pub endorsers: usize,
    pub orderers: usize,
    pub channels: Vec<ChannelId>,
    /// k of the k-of-N endorsement policy, the same for every channel.
    pub endorsement_required: usize,
    pub block_cut: BlockCutConfig,
    pub raft: RaftTiming,
    pub simnet: SimNetConfig,
    /// Ticks between re-sends of unacknowledged blocks.
    pub retransmit_interval: u64,
    /// Ticks a client waits for its transaction before resubmitting.
    pub commit_timeout: u64,
    pub resubmissions: u32,
    /// Login session lifetime in seconds.
    pub session_ttl: u64,
    /// When set, peer chains are written to block files under this directory.
    pub data_dir: Option<PathBuf>,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            endorsers: 6,
            orderers: 3,
            channels: ChannelId::platform().to_vec(),
            endorsement_required: 2,
            block_cut: BlockCutConfig::default(),
            raft: RaftTiming::default(),
            simnet: SimNetConfig::default(),
            retransmit_interval: 100,
            commit_timeout: 2_000,
            resubmissions: 3,
            session_ttl: crate::identity::DEFAULT_SESSION_TTL,
            data_dir: None,
        }
    }
}

impl NetworkConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.simnet.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |m: String| Err(ConfigError(m));
        if self.endorsers == 0 {
            return bad("endorser count must be at least 1".into());
        }
        if self.orderers == 0 {
            return bad("orderer count must be at least 1".into());
        }
        if self.channels.is_empty() {
            return bad("at least one channel is required".into());
        }
        let platform = ChannelId::platform();
        let mut seen = BTreeSet::new();
        for c in &self.channels {
            if !platform.contains(c) {
                return bad(format!("unknown channel {c} (expected one of E1..E4)"));
            }
            if !seen.insert(c) {
                return bad(format!("channel {c} listed twice"));
            }
        }
        if self.endorsement_required == 0 || self.endorsement_required > self.endorsers {
            return bad(format!(
                "endorsement policy {} of {} is not satisfiable",
                self.endorsement_required, self.endorsers
            ));
        }
        if self.block_cut.max_tx_count == 0 || self.block_cut.max_wait == 0 {
            return bad("block cutting needs max_tx_count >= 1 and max_wait >= 1".into());
        }
        let r = &self.raft;
        if r.election_timeout_min == 0 || r.election_timeout_min > r.election_timeout_max {
            return bad("election timeout bounds must satisfy 1 <= min <= max".into());
        }
        if r.heartbeat_interval == 0 || r.heartbeat_interval >= r.election_timeout_min {
            return bad("heartbeat interval must be positive and below the election timeout".into());
        }
        if r.max_batch == 0 {
            return bad("raft max_batch must be at least 1".into());
        }
        self.simnet.validate().map_err(ConfigError)?;
        for p in &self.simnet.partitions {
            for n in &p.nodes {
                let ok = match *n {
                    NodeAddr::Orderer(i) => i < self.orderers,
                    NodeAddr::Peer(i) => i < self.endorsers,
                };
                if !ok {
                    return bad(format!("partition names unknown node {n}"));
                }
            }
        }
        if self.retransmit_interval == 0 || self.commit_timeout == 0 || self.session_ttl == 0 {
            return bad("retransmit interval, commit timeout and session ttl must be positive".into());
        }
        Ok(())
    }
}
