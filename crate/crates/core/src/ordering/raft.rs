//! Raft consensus as a pure, single-threaded state machine.
//!
//! The node never sends anything itself: handlers and [`RaftNode::tick`]
//! return the messages to put on the wire. Time is an explicit tick count.
//! Log indices are 1-based; index 0 is the empty prefix.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ledger::{ChannelId, Transaction};

pub type NodeId = usize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RaftTiming {
    pub election_timeout_min: u64,
    pub election_timeout_max: u64,
    pub heartbeat_interval: u64,
    /// Upper bound on entries carried by one AppendEntries.
    pub max_batch: usize,
}

impl Default for RaftTiming {
    fn default() -> Self {
        RaftTiming {
            election_timeout_min: 150,
            election_timeout_max: 300,
            heartbeat_interval: 50,
            max_batch: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryPayload {
    /// Appended by every new leader so entries of earlier terms can commit.
    Noop,
    Tx(Arc<Transaction>),
    /// Everything for this channel since the previous marker forms a block.
    Cut(ChannelId),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogEntry {
    pub term: u64,
    pub payload: EntryPayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RaftMessage {
    RequestVote {
        term: u64,
        candidate: NodeId,
        last_log_index: u64,
        last_log_term: u64,
    },
    RequestVoteReply {
        term: u64,
        voter: NodeId,
        granted: bool,
    },
    AppendEntries {
        term: u64,
        leader: NodeId,
        prev_log_index: u64,
        prev_log_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
    },
    AppendEntriesReply {
        term: u64,
        follower: NodeId,
        success: bool,
        /// On success the last index now known to match; on failure the
        /// follower's hint of where the logs may still agree.
        index: u64,
    },
}

impl RaftMessage {
    pub fn term(&self) -> u64 {
        match self {
            RaftMessage::RequestVote { term, .. }
            | RaftMessage::RequestVoteReply { term, .. }
            | RaftMessage::AppendEntries { term, .. }
            | RaftMessage::AppendEntriesReply { term, .. } => *term,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RaftRole {
    Follower,
    Candidate,
    Leader,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubmitResult {
    Accepted { index: u64 },
    Redirected(NodeId),
    Unavailable,
}

pub type Outbound = Vec<(NodeId, RaftMessage)>;

#[derive(Debug, Clone)]
pub struct RaftNode {
    id: NodeId,
    others: Vec<NodeId>,
    timing: RaftTiming,
    rng: ChaCha8Rng,

    // Persistent.
    current_term: u64,
    voted_for: Option<NodeId>,
    log: Vec<LogEntry>,

    // Volatile.
    commit_index: u64,
    last_applied: u64,
    role: RaftRole,
    leader_hint: Option<NodeId>,
    election_deadline: u64,
    next_heartbeat: u64,
    leader_since: u64,
    votes: BTreeSet<NodeId>,
    next_index: BTreeMap<NodeId, u64>,
    match_index: BTreeMap<NodeId, u64>,
    last_heard: BTreeMap<NodeId, u64>,
}

impl RaftNode {
    /// `cluster` lists every node id including `id`.
    pub fn new(id: NodeId, cluster: &[NodeId], timing: RaftTiming, seed: u64, now: u64) -> Self {
        let mut node = RaftNode {
            id,
            others: cluster.iter().copied().filter(|&n| n != id).collect(),
            timing,
            rng: ChaCha8Rng::seed_from_u64(seed),
            current_term: 0,
            voted_for: None,
            log: Vec::new(),
            commit_index: 0,
            last_applied: 0,
            role: RaftRole::Follower,
            leader_hint: None,
            election_deadline: 0,
            next_heartbeat: 0,
            leader_since: 0,
            votes: BTreeSet::new(),
            next_index: BTreeMap::new(),
            match_index: BTreeMap::new(),
            last_heard: BTreeMap::new(),
        };
        node.reset_election_timer(now);
        node
    }

    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn term(&self) -> u64 {
        self.current_term
    }

    pub fn voted_for(&self) -> Option<NodeId> {
        self.voted_for
    }

    pub fn role(&self) -> RaftRole {
        self.role
    }

    pub fn is_leader(&self) -> bool {
        self.role == RaftRole::Leader
    }

    pub fn leader_hint(&self) -> Option<NodeId> {
        self.leader_hint
    }

    pub fn log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn commit_index(&self) -> u64 {
        self.commit_index
    }

    pub fn last_log_index(&self) -> u64 {
        self.log.len() as u64
    }

    pub fn last_log_term(&self) -> u64 {
        self.log.last().map_or(0, |e| e.term)
    }

    fn majority(&self) -> usize {
        self.others.len().div_ceil(2) + 1
    }

    fn term_at(&self, index: u64) -> Option<u64> {
        if index == 0 {
            Some(0)
        } else {
            self.log.get(index as usize - 1).map(|e| e.term)
        }
    }

    fn reset_election_timer(&mut self, now: u64) {
        let t = self.timing;
        self.election_deadline = now + self.rng.gen_range(t.election_timeout_min..=t.election_timeout_max);
    }

    fn become_follower(&mut self, term: u64, now: u64) {
        if term > self.current_term {
            self.current_term = term;
            self.voted_for = None;
        }
        if self.role != RaftRole::Follower {
            self.role = RaftRole::Follower;
            self.reset_election_timer(now);
        }
        self.votes.clear();
    }

    /// Simulates a crash and restart: persistent state survives, volatile
    /// state is rebuilt. The applied prefix is durable on the caller's side,
    /// so the commit index resumes from it.
    pub fn restart(&mut self, now: u64) {
        self.role = RaftRole::Follower;
        self.leader_hint = None;
        self.votes.clear();
        self.next_index.clear();
        self.match_index.clear();
        self.last_heard.clear();
        self.commit_index = self.last_applied;
        self.reset_election_timer(now);
    }

    /// Client entry point. Only the leader appends.
    pub fn submit(&mut self, payload: EntryPayload) -> SubmitResult {
        match self.role {
            RaftRole::Leader => {
                self.log.push(LogEntry {
                    term: self.current_term,
                    payload,
                });
                SubmitResult::Accepted {
                    index: self.last_log_index(),
                }
            }
            _ => match self.leader_hint {
                Some(l) if l != self.id => SubmitResult::Redirected(l),
                _ => SubmitResult::Unavailable,
            },
        }
    }

    /// Sends newly appended entries to followers that are caught up to them.
    pub fn flush(&mut self) -> Outbound {
        let mut out = Vec::new();
        if self.role == RaftRole::Leader {
            for peer in self.others.clone() {
                if self.next_index[&peer] <= self.last_log_index() {
                    out.push(self.append_for(peer));
                }
            }
            if self.others.is_empty() {
                self.advance_commit();
            }
        }
        out
    }

    /// Builds AppendEntries for `peer` from its next index, optimistically
    /// advancing the next index past what was sent.
    fn append_for(&mut self, peer: NodeId) -> (NodeId, RaftMessage) {
        let next = self.next_index[&peer].clamp(1, self.last_log_index() + 1);
        let prev = next - 1;
        let end = (prev as usize + self.timing.max_batch).min(self.log.len());
        let entries = self.log[prev as usize..end].to_vec();
        self.next_index.insert(peer, end as u64 + 1);
        (
            peer,
            RaftMessage::AppendEntries {
                term: self.current_term,
                leader: self.id,
                prev_log_index: prev,
                prev_log_term: self.term_at(prev).unwrap_or(0),
                entries,
                leader_commit: self.commit_index,
            },
        )
    }

    fn broadcast_append(&mut self) -> Outbound {
        self.others.clone().into_iter().map(|p| self.append_for(p)).collect()
    }

    pub fn tick(&mut self, now: u64) -> Outbound {
        match self.role {
            RaftRole::Leader => {
                let t = self.timing;
                if now >= self.leader_since + t.election_timeout_max {
                    let window = now.saturating_sub(t.election_timeout_max);
                    let heard = self.others.iter().filter(|p| self.last_heard[*p] >= window).count() + 1;
                    if heard < self.majority() {
                        // Lost contact with a quorum: stop accepting work.
                        self.role = RaftRole::Follower;
                        self.leader_hint = None;
                        self.reset_election_timer(now);
                        return Vec::new();
                    }
                }
                if now >= self.next_heartbeat {
                    self.next_heartbeat = now + t.heartbeat_interval;
                    return self.broadcast_append();
                }
                Vec::new()
            }
            RaftRole::Follower | RaftRole::Candidate => {
                if now < self.election_deadline {
                    return Vec::new();
                }
                self.start_election(now)
            }
        }
    }

    fn start_election(&mut self, now: u64) -> Outbound {
        self.current_term += 1;
        self.role = RaftRole::Candidate;
        self.voted_for = Some(self.id);
        self.leader_hint = None;
        self.votes = BTreeSet::from([self.id]);
        self.reset_election_timer(now);
        if self.votes.len() >= self.majority() {
            return self.become_leader(now);
        }
        let msg = RaftMessage::RequestVote {
            term: self.current_term,
            candidate: self.id,
            last_log_index: self.last_log_index(),
            last_log_term: self.last_log_term(),
        };
        self.others.iter().map(|&p| (p, msg.clone())).collect()
    }

    fn become_leader(&mut self, now: u64) -> Outbound {
        self.role = RaftRole::Leader;
        self.leader_hint = Some(self.id);
        self.leader_since = now;
        self.votes.clear();
        self.log.push(LogEntry {
            term: self.current_term,
            payload: EntryPayload::Noop,
        });
        let next = self.last_log_index();
        for &p in &self.others {
            self.next_index.insert(p, next);
            self.match_index.insert(p, 0);
            self.last_heard.insert(p, now);
        }
        self.next_heartbeat = now + self.timing.heartbeat_interval;
        if self.others.is_empty() {
            self.advance_commit();
        }
        self.broadcast_append()
    }

    /// Dispatches one incoming message.
    pub fn handle(&mut self, from: NodeId, msg: RaftMessage, now: u64) -> Outbound {
        match msg {
            RaftMessage::RequestVote {
                term,
                candidate,
                last_log_index,
                last_log_term,
            } => {
                let reply = self.handle_request_vote(term, candidate, last_log_index, last_log_term, now);
                vec![(from, reply)]
            }
            RaftMessage::RequestVoteReply { term, voter, granted } => self.handle_vote_reply(term, voter, granted, now),
            RaftMessage::AppendEntries {
                term,
                leader,
                prev_log_index,
                prev_log_term,
                entries,
                leader_commit,
            } => {
                let reply =
                    self.handle_append_entries(term, leader, prev_log_index, prev_log_term, entries, leader_commit, now);
                vec![(from, reply)]
            }
            RaftMessage::AppendEntriesReply {
                term,
                follower,
                success,
                index,
            } => self.handle_append_reply(term, follower, success, index, now),
        }
    }

    /// Grants iff the term is current, no other candidate got this node's
    /// vote in the term, and the candidate's log is at least as up to date.
    pub fn handle_request_vote(
        &mut self,
        term: u64,
        candidate: NodeId,
        last_log_index: u64,
        last_log_term: u64,
        now: u64,
    ) -> RaftMessage {
        if term > self.current_term {
            self.become_follower(term, now);
            self.leader_hint = None;
        }
        let up_to_date = (last_log_term, last_log_index) >= (self.last_log_term(), self.last_log_index());
        let free = self.voted_for.is_none_or(|v| v == candidate);
        let granted = term == self.current_term && free && up_to_date;
        if granted {
            self.voted_for = Some(candidate);
            self.reset_election_timer(now);
        }
        RaftMessage::RequestVoteReply {
            term: self.current_term,
            voter: self.id,
            granted,
        }
    }

    fn handle_vote_reply(&mut self, term: u64, voter: NodeId, granted: bool, now: u64) -> Outbound {
        if term > self.current_term {
            self.become_follower(term, now);
            self.leader_hint = None;
            return Vec::new();
        }
        if self.role != RaftRole::Candidate || term != self.current_term || !granted {
            return Vec::new();
        }
        self.votes.insert(voter);
        if self.votes.len() >= self.majority() {
            return self.become_leader(now);
        }
        Vec::new()
    }

    #[allow(clippy::too_many_arguments)]
    pub fn handle_append_entries(
        &mut self,
        term: u64,
        leader: NodeId,
        prev_log_index: u64,
        prev_log_term: u64,
        entries: Vec<LogEntry>,
        leader_commit: u64,
        now: u64,
    ) -> RaftMessage {
        let reject = |node: &Self, index: u64| RaftMessage::AppendEntriesReply {
            term: node.current_term,
            follower: node.id,
            success: false,
            index,
        };
        if term < self.current_term {
            return reject(self, self.last_log_index());
        }
        self.become_follower(term, now);
        self.leader_hint = Some(leader);
        self.reset_election_timer(now);

        match self.term_at(prev_log_index) {
            None => return reject(self, self.last_log_index()),
            Some(t) if t != prev_log_term => {
                // Skip back over the whole conflicting term, never below the
                // committed prefix.
                let mut i = prev_log_index;
                while i > self.commit_index + 1 && self.term_at(i - 1) == Some(t) {
                    i -= 1;
                }
                return reject(self, (i - 1).max(self.commit_index));
            }
            Some(_) => {}
        }

        let mut index = prev_log_index;
        for entry in entries {
            index += 1;
            match self.term_at(index) {
                Some(t) if t == entry.term => continue,
                Some(_) => {
                    assert!(index > self.commit_index, "leader tried to overwrite a committed entry");
                    self.log.truncate(index as usize - 1);
                    self.log.push(entry);
                }
                None => self.log.push(entry),
            }
        }
        if leader_commit > self.commit_index {
            self.commit_index = leader_commit.min(index);
        }
        RaftMessage::AppendEntriesReply {
            term: self.current_term,
            follower: self.id,
            success: true,
            index,
        }
    }

    fn handle_append_reply(&mut self, term: u64, follower: NodeId, success: bool, index: u64, now: u64) -> Outbound {
        if term > self.current_term {
            self.become_follower(term, now);
            self.leader_hint = None;
            return Vec::new();
        }
        if self.role != RaftRole::Leader || term != self.current_term {
            return Vec::new();
        }
        self.last_heard.insert(follower, now);
        let matched = self.match_index[&follower];
        if success {
            if index > matched {
                self.match_index.insert(follower, index);
                self.advance_commit();
            }
            let next = self.next_index[&follower].max(index + 1);
            self.next_index.insert(follower, next);
            if next <= self.last_log_index() {
                return vec![self.append_for(follower)];
            }
            return Vec::new();
        }
        let next = (index + 1).max(matched + 1);
        self.next_index.insert(follower, next);
        vec![self.append_for(follower)]
    }

    fn advance_commit(&mut self) {
        let mut n = self.last_log_index();
        while n > self.commit_index {
            if self.term_at(n) == Some(self.current_term) {
                let replicas = 1 + self.match_index.values().filter(|&&m| m >= n).count();
                if replicas >= self.majority() {
                    self.commit_index = n;
                    return;
                }
            } else {
                // Earlier-term entries commit only through a current-term one.
                return;
            }
            n -= 1;
        }
    }

    /// Committed entries not yet handed out, in log order.
    pub fn take_committed(&mut self) -> Vec<(u64, LogEntry)> {
        let from = self.last_applied;
        let to = self.commit_index;
        self.last_applied = to;
        (from + 1..=to)
            .map(|i| (i, self.log[i as usize - 1].clone()))
            .collect()
    }
}
