//! One ordering node: a Raft replica plus the per-channel block builder and
//! block delivery to peers.
//!
//! Only the leader decides when a channel's batch is due; it records the
//! decision as a cut marker in the replicated log. Every replica turns the
//! committed log into blocks the same way, so all of them hold identical
//! chains and any of them can serve peers.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use crate::codec::Hash256;
use crate::ledger::{Block, ChannelId, Transaction};

use super::cutter::{cut_block, BlockCutConfig, PendingTx};
use super::raft::{EntryPayload, LogEntry, NodeId, RaftMessage, RaftNode, RaftTiming, SubmitResult};

/// Blocks sent to a peer beyond its acknowledged height.
pub const DELIVERY_WINDOW: u64 = 32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum OrdererOutput {
    Raft { to: NodeId, msg: RaftMessage },
    Deliver { peer: usize, channel: ChannelId, block: Arc<Block> },
}

#[derive(Debug, Clone, Default)]
struct ChannelChain {
    blocks: Vec<Arc<Block>>,
    /// Committed transactions waiting for the next cut marker.
    uncut: Vec<Arc<Transaction>>,
    included: HashSet<Hash256>,
}

impl ChannelChain {
    fn new() -> Self {
        ChannelChain {
            blocks: vec![Arc::new(Block::genesis())],
            ..Default::default()
        }
    }

    fn height(&self) -> u64 {
        self.blocks.len() as u64
    }
}

#[derive(Debug, Clone)]
pub struct Orderer {
    raft: RaftNode,
    cut: BlockCutConfig,
    retransmit_interval: u64,
    chains: BTreeMap<ChannelId, ChannelChain>,
    /// Leader only: transactions in the log after the channel's last marker.
    pending: BTreeMap<ChannelId, Vec<PendingTx>>,
    was_leader: bool,
    /// Per peer, per channel: acknowledged height.
    acked: Vec<BTreeMap<ChannelId, u64>>,
    next_retransmit: u64,
}

impl Orderer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        id: NodeId,
        cluster: &[NodeId],
        channels: &[ChannelId],
        peers: usize,
        timing: RaftTiming,
        cut: BlockCutConfig,
        retransmit_interval: u64,
        seed: u64,
    ) -> Self {
        Orderer {
            raft: RaftNode::new(id, cluster, timing, seed, 0),
            cut,
            retransmit_interval,
            chains: channels.iter().map(|c| (c.clone(), ChannelChain::new())).collect(),
            pending: BTreeMap::new(),
            was_leader: false,
            acked: vec![channels.iter().map(|c| (c.clone(), 1)).collect(); peers],
            next_retransmit: retransmit_interval,
        }
    }

    pub fn id(&self) -> NodeId {
        self.raft.id()
    }

    pub fn raft(&self) -> &RaftNode {
        &self.raft
    }

    pub fn height(&self, channel: &ChannelId) -> Option<u64> {
        self.chains.get(channel).map(ChannelChain::height)
    }

    pub fn blocks(&self, channel: &ChannelId) -> Option<&[Arc<Block>]> {
        self.chains.get(channel).map(|c| c.blocks.as_slice())
    }

    /// Client submission. Followers redirect; a leaderless node is
    /// unavailable.
    pub fn submit(&mut self, tx: Arc<Transaction>, now: u64) -> (SubmitResult, Vec<OrdererOutput>) {
        let channel = tx.channel().clone();
        if !self.chains.contains_key(&channel) {
            return (SubmitResult::Unavailable, Vec::new());
        }
        let result = self.raft.submit(EntryPayload::Tx(tx.clone()));
        let mut out = Vec::new();
        if let SubmitResult::Accepted { .. } = result {
            let queue = self.pending.entry(channel.clone()).or_default();
            queue.push(PendingTx { arrival: now, tx });
            if cut_block(queue, &self.cut, now).is_some() {
                // The marker closes everything before it in the log.
                queue.clear();
                self.raft.submit(EntryPayload::Cut(channel));
            }
            out.extend(Self::wrap(self.raft.flush()));
            out.extend(self.apply_committed());
        }
        (result, out)
    }

    pub fn handle_raft(&mut self, from: NodeId, msg: RaftMessage, now: u64) -> Vec<OrdererOutput> {
        let replies = self.raft.handle(from, msg, now);
        let mut out = Self::wrap(replies);
        out.extend(self.after_raft_step(now));
        out
    }

    pub fn tick(&mut self, now: u64) -> Vec<OrdererOutput> {
        let msgs = self.raft.tick(now);
        let mut out = Self::wrap(msgs);
        out.extend(self.after_raft_step(now));
        if self.raft.is_leader() {
            let mut due = Vec::new();
            for (channel, queue) in &mut self.pending {
                if cut_block(queue, &self.cut, now).is_some() {
                    queue.clear();
                    due.push(channel.clone());
                }
            }
            if !due.is_empty() {
                for channel in due {
                    self.raft.submit(EntryPayload::Cut(channel));
                }
                out.extend(Self::wrap(self.raft.flush()));
                out.extend(self.apply_committed());
            }
        }
        if now >= self.next_retransmit {
            self.next_retransmit = now + self.retransmit_interval;
            out.extend(self.retransmit());
        }
        out
    }

    /// A peer reports its height for `channel`; slides the delivery window.
    pub fn on_ack(&mut self, peer: usize, channel: &ChannelId, height: u64) -> Vec<OrdererOutput> {
        let Some(chain) = self.chains.get(channel) else {
            return Vec::new();
        };
        let Some(acked) = self.acked.get_mut(peer).and_then(|m| m.get_mut(channel)) else {
            return Vec::new();
        };
        if height <= *acked {
            return Vec::new();
        }
        let old_end = *acked + DELIVERY_WINDOW;
        *acked = height;
        let new_end = (height + DELIVERY_WINDOW).min(chain.height());
        (old_end.max(height)..new_end)
            .map(|n| OrdererOutput::Deliver {
                peer,
                channel: channel.clone(),
                block: chain.blocks[n as usize].clone(),
            })
            .collect()
    }

    /// Crash-restart: Raft volatile state is lost, the block store is kept.
    pub fn restart(&mut self, now: u64) {
        self.raft.restart(now);
        self.pending.clear();
        self.was_leader = false;
        self.next_retransmit = now + self.retransmit_interval;
    }

    fn wrap(msgs: Vec<(NodeId, RaftMessage)>) -> Vec<OrdererOutput> {
        msgs.into_iter().map(|(to, msg)| OrdererOutput::Raft { to, msg }).collect()
    }

    fn after_raft_step(&mut self, now: u64) -> Vec<OrdererOutput> {
        let leader = self.raft.is_leader();
        if leader && !self.was_leader {
            self.rebuild_pending(now);
        } else if !leader && self.was_leader {
            self.pending.clear();
        }
        self.was_leader = leader;
        self.apply_committed()
    }

    /// New leader: every transaction after a channel's last marker is
    /// pending, timed from now.
    fn rebuild_pending(&mut self, now: u64) {
        self.pending.clear();
        let mut closed = HashSet::new();
        let mut found: BTreeMap<ChannelId, Vec<PendingTx>> = BTreeMap::new();
        for entry in self.raft.log().iter().rev() {
            match &entry.payload {
                EntryPayload::Cut(c) => {
                    closed.insert(c.clone());
                }
                EntryPayload::Tx(tx) if !closed.contains(tx.channel()) => {
                    found.entry(tx.channel().clone()).or_default().push(PendingTx {
                        arrival: now,
                        tx: tx.clone(),
                    });
                }
                _ => {}
            }
        }
        for (channel, mut txs) in found {
            txs.reverse();
            self.pending.insert(channel, txs);
        }
    }

    fn apply_committed(&mut self) -> Vec<OrdererOutput> {
        let mut out = Vec::new();
        for (_, entry) in self.raft.take_committed() {
            let LogEntry { payload, .. } = entry;
            match payload {
                EntryPayload::Noop => {}
                EntryPayload::Tx(tx) => {
                    if let Some(chain) = self.chains.get_mut(tx.channel()) {
                        chain.uncut.push(tx);
                    }
                }
                EntryPayload::Cut(channel) => {
                    for block in self.form_blocks(&channel) {
                        out.extend(self.push_new_block(&channel, block));
                    }
                }
            }
        }
        out
    }

    /// Turns the uncut batch into blocks of at most `max_tx_count`,
    /// dropping resubmitted transactions that already made it into an
    /// earlier block. A batch only exceeds the limit after a leader change.
    fn form_blocks(&mut self, channel: &ChannelId) -> Vec<Arc<Block>> {
        let max = self.cut.max_tx_count.max(1);
        let Some(chain) = self.chains.get_mut(channel) else {
            return Vec::new();
        };
        let mut fresh = Vec::new();
        for tx in chain.uncut.drain(..) {
            if chain.included.insert(tx.tx_id) {
                fresh.push((*tx).clone());
            }
        }
        let mut formed = Vec::new();
        for txs in fresh.chunks(max) {
            let tip = chain.blocks.last().expect("genesis").hash();
            let block = Arc::new(Block::new(chain.height(), tip, txs.to_vec()));
            chain.blocks.push(block.clone());
            formed.push(block);
        }
        formed
    }

    fn push_new_block(&self, channel: &ChannelId, block: Arc<Block>) -> Vec<OrdererOutput> {
        let n = block.number();
        self.acked
            .iter()
            .enumerate()
            .filter(|(_, m)| {
                let a = m[channel];
                a <= n && n < a + DELIVERY_WINDOW
            })
            .map(|(peer, _)| OrdererOutput::Deliver {
                peer,
                channel: channel.clone(),
                block: block.clone(),
            })
            .collect()
    }

    fn retransmit(&self) -> Vec<OrdererOutput> {
        let mut out = Vec::new();
        for (peer, heights) in self.acked.iter().enumerate() {
            for (channel, &acked) in heights {
                let chain = &self.chains[channel];
                let end = (acked + DELIVERY_WINDOW).min(chain.height());
                for n in acked..end {
                    out.push(OrdererOutput::Deliver {
                        peer,
                        channel: channel.clone(),
                        block: chain.blocks[n as usize].clone(),
                    });
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::{IdentityId, Signature};
    use crate::ledger::{ProposalHeader, ReadWriteSet};
    use std::collections::{BTreeSet, VecDeque};

    fn tx(channel: ChannelId, nonce: u64) -> Arc<Transaction> {
        let header = ProposalHeader {
            channel,
            chaincode: "cc".into(),
            function: "f".into(),
            args: vec![],
            creator: IdentityId(1),
            nonce,
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

    struct Cluster {
        nodes: Vec<Orderer>,
        now: u64,
        delivered: Vec<(usize, usize, u64)>,
    }

    impl Cluster {
        fn new(peers: usize) -> Self {
            let chans = [ChannelId::trades()];
            let nodes = (0..3)
                .map(|i| {
                    Orderer::new(i, &[0, 1, 2], &chans, peers, RaftTiming::default(), BlockCutConfig::default(), 100, 7 + i as u64)
                })
                .collect();
            Cluster { nodes, now: 0, delivered: Vec::new() }
        }

        fn route(&mut self, from: usize, out: Vec<OrdererOutput>) {
            let mut q: VecDeque<_> = out.into_iter().map(|o| (from, o)).collect();
            while let Some((src, o)) = q.pop_front() {
                match o {
                    OrdererOutput::Raft { to, msg } => {
                        let more = self.nodes[to].handle_raft(src, msg, self.now);
                        q.extend(more.into_iter().map(|o| (to, o)));
                    }
                    OrdererOutput::Deliver { peer, block, .. } => self.delivered.push((src, peer, block.number())),
                }
            }
        }

        fn step(&mut self) {
            self.now += 1;
            for i in 0..self.nodes.len() {
                let out = self.nodes[i].tick(self.now);
                self.route(i, out);
            }
        }

        fn leader(&mut self) -> usize {
            while !self.nodes.iter().any(|n| n.raft().is_leader()) {
                self.step();
            }
            self.nodes.iter().position(|n| n.raft().is_leader()).unwrap()
        }

        fn submit(&mut self, t: Arc<Transaction>) {
            let l = self.leader();
            let (r, out) = self.nodes[l].submit(t, self.now);
            assert!(matches!(r, SubmitResult::Accepted { .. }));
            self.route(l, out);
        }

        fn sizes(&self, node: usize) -> Vec<usize> {
            self.nodes[node].blocks(&ChannelId::trades()).unwrap()[1..]
                .iter()
                .map(|b| b.transactions.len())
                .collect()
        }
    }

    #[test]
    fn full_batch_cuts_immediately_remainder_after_max_wait() {
        let mut c = Cluster::new(0);
        for i in 0..25 {
            c.submit(tx(ChannelId::trades(), i));
        }
        c.step();
        let l = c.leader();
        assert_eq!(c.sizes(l), vec![10, 10]);
        for _ in 0..400 {
            c.step();
        }
        assert_eq!(c.sizes(l), vec![10, 10]);
        for _ in 0..200 {
            c.step();
        }
        for n in 0..3 {
            assert_eq!(c.sizes(n), vec![10, 10, 5]);
        }
        let a = c.nodes[0].blocks(&ChannelId::trades()).unwrap();
        for n in 1..3 {
            assert_eq!(c.nodes[n].blocks(&ChannelId::trades()).unwrap(), a);
        }
        for w in a.windows(2) {
            assert_eq!(w[1].header.prev_hash, w[0].hash());
            assert_eq!(w[1].number(), w[0].number() + 1);
        }
    }

    #[test]
    fn resubmitted_transaction_is_ordered_once() {
        let mut c = Cluster::new(0);
        let t = tx(ChannelId::trades(), 1);
        c.submit(t.clone());
        for _ in 0..600 {
            c.step();
        }
        c.submit(t.clone());
        c.submit(tx(ChannelId::trades(), 2));
        for _ in 0..600 {
            c.step();
        }
        assert_eq!(c.sizes(1), vec![1, 1]);
    }

    #[test]
    fn delivery_window_slides_on_ack() {
        let mut c = Cluster::new(1);
        for i in 0..(DELIVERY_WINDOW + 5) * 10 {
            c.submit(tx(ChannelId::trades(), i));
        }
        c.step();
        let l = c.leader();
        let h = c.nodes[l].height(&ChannelId::trades()).unwrap();
        assert_eq!(h, DELIVERY_WINDOW + 6);
        let sent: BTreeSet<u64> = c.delivered.iter().filter(|d| d.0 == l).map(|d| d.2).collect();
        assert_eq!(sent, (1..1 + DELIVERY_WINDOW).collect());
        let more = c.nodes[l].on_ack(0, &ChannelId::trades(), 11);
        let nums: Vec<u64> = more
            .iter()
            .map(|o| match o {
                OrdererOutput::Deliver { block, .. } => block.number(),
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(nums, (1 + DELIVERY_WINDOW..h).collect::<Vec<_>>());
        assert!(c.nodes[l].on_ack(0, &ChannelId::trades(), 5).is_empty());
    }

    #[test]
    fn unacked_blocks_are_retransmitted() {
        let mut c = Cluster::new(1);
        c.submit(tx(ChannelId::trades(), 0));
        for _ in 0..600 {
            c.step();
        }
        let count = c.delivered.iter().filter(|d| d.2 == 1).count();
        assert!(count > 3, "block 1 sent {count} times");
        for n in 0..3 {
            c.nodes[n].on_ack(0, &ChannelId::trades(), 2);
        }
        c.delivered.clear();
        for _ in 0..300 {
            c.step();
        }
        assert!(c.delivered.is_empty());
    }
}
