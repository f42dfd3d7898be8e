//! Block cutting by size or age.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::ledger::Transaction;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BlockCutConfig {
    pub max_tx_count: usize,
    /// Ticks.
    pub max_wait: u64,
}

impl Default for BlockCutConfig {
    fn default() -> Self {
        BlockCutConfig {
            max_tx_count: 10,
            max_wait: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PendingTx {
    /// Tick at which the orderer first saw the transaction.
    pub arrival: u64,
    pub tx: Arc<Transaction>,
}

/// Removes and returns the next batch from `pending` (log order) if one is
/// due: either `max_tx_count` transactions are waiting or the oldest has
/// waited `max_wait` ticks. Never returns an empty batch.
pub fn cut_block(pending: &mut Vec<PendingTx>, cfg: &BlockCutConfig, now: u64) -> Option<Vec<Arc<Transaction>>> {
    let oldest = pending.first()?.arrival;
    let n = if pending.len() >= cfg.max_tx_count {
        cfg.max_tx_count
    } else if now.saturating_sub(oldest) >= cfg.max_wait {
        pending.len()
    } else {
        return None;
    };
    Some(pending.drain(..n).map(|p| p.tx).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::Hash256;
    use crate::identity::{IdentityId, Signature};
    use crate::ledger::{ChannelId, ProposalHeader, ReadWriteSet};

    fn tx(n: u64) -> Arc<Transaction> {
        let header = ProposalHeader {
            channel: ChannelId::trades(),
            chaincode: "trades".into(),
            function: "balance".into(),
            args: vec![],
            creator: IdentityId(1),
            nonce: n,
            timestamp: 0,
        };
        Arc::new(Transaction {
            tx_id: header.tx_id(),
            header,
            creator_signature: Signature([0; 64]),
            response: vec![],
            rwset: ReadWriteSet::default(),
            events: vec![],
            endorsements: vec![],
        })
    }

    fn pending(n: u64, arrival: u64) -> Vec<PendingTx> {
        (0..n).map(|i| PendingTx { arrival, tx: tx(i) }).collect()
    }

    #[test]
    fn full_batch_cuts_at_ten() {
        let mut p = pending(10, 5);
        let b = cut_block(&mut p, &BlockCutConfig::default(), 5).unwrap();
        assert_eq!(b.len(), 10);
        assert!(p.is_empty());
    }

    #[test]
    fn batch_keeps_log_order_and_leaves_overflow() {
        let mut p = pending(13, 0);
        let ids: Vec<Hash256> = p.iter().map(|x| x.tx.tx_id).collect();
        let b = cut_block(&mut p, &BlockCutConfig::default(), 0).unwrap();
        assert_eq!(b.iter().map(|t| t.tx_id).collect::<Vec<_>>(), ids[..10]);
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn single_tx_cuts_after_max_wait() {
        let mut p = pending(1, 100);
        let cfg = BlockCutConfig::default();
        assert!(cut_block(&mut p, &cfg, 599).is_none());
        assert_eq!(cut_block(&mut p, &cfg, 600).unwrap().len(), 1);
    }

    #[test]
    fn never_empty() {
        let mut p = Vec::new();
        for now in [0, 500, 10_000] {
            assert!(cut_block(&mut p, &BlockCutConfig::default(), now).is_none());
        }
    }
}
