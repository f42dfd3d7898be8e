//! Seeded discrete-event network: per-message delay, random drops,
//! scheduled partitions and crashed nodes. Same seed, same schedule.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

/// A node on the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum NodeAddr {
    Orderer(usize),
    Peer(usize),
}

impl fmt::Display for NodeAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeAddr::Orderer(i) => write!(f, "orderer{i}"),
            NodeAddr::Peer(i) => write!(f, "peer{i}"),
        }
    }
}

impl FromStr for NodeAddr {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |rest: &str| rest.parse::<usize>().map_err(|_| format!("bad node address {s:?}"));
        if let Some(rest) = s.strip_prefix("orderer") {
            Ok(NodeAddr::Orderer(parse(rest)?))
        } else if let Some(rest) = s.strip_prefix("peer") {
            Ok(NodeAddr::Peer(parse(rest)?))
        } else {
            Err(format!("bad node address {s:?} (want ordererN or peerN)"))
        }
    }
}

impl Serialize for NodeAddr {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeAddr {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// During `[start, end)` the nodes in `nodes` only reach each other.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Partition {
    pub start: u64,
    pub end: u64,
    pub nodes: BTreeSet<NodeAddr>,
}

impl Partition {
    pub fn active(&self, now: u64) -> bool {
        self.start <= now && now < self.end
    }

    pub fn separates(&self, a: NodeAddr, b: NodeAddr) -> bool {
        self.nodes.contains(&a) != self.nodes.contains(&b)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimNetConfig {
    pub seed: u64,
    pub min_delay: u64,
    pub max_delay: u64,
    pub drop_probability: f64,
    pub partitions: Vec<Partition>,
}

impl Default for SimNetConfig {
    fn default() -> Self {
        SimNetConfig {
            seed: 0,
            min_delay: 1,
            max_delay: 5,
            drop_probability: 0.0,
            partitions: Vec::new(),
        }
    }
}

impl SimNetConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.min_delay == 0 || self.min_delay > self.max_delay {
            return Err(format!(
                "delay bounds must satisfy 1 <= min <= max (got {}..{})",
                self.min_delay, self.max_delay
            ));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(format!("drop probability {} not in [0, 1)", self.drop_probability));
        }
        for p in &self.partitions {
            if p.start >= p.end {
                return Err(format!("empty partition window {}..{}", p.start, p.end));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct NetStats {
    pub sent: u64,
    pub dropped: u64,
    pub delivered: u64,
}

struct InFlight<M> {
    at: u64,
    seq: u64,
    from: NodeAddr,
    to: NodeAddr,
    msg: M,
}

impl<M> PartialEq for InFlight<M> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl<M> Eq for InFlight<M> {}
impl<M> PartialOrd for InFlight<M> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl<M> Ord for InFlight<M> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.at, self.seq).cmp(&(other.at, other.seq))
    }
}

pub struct SimNet<M> {
    cfg: SimNetConfig,
    rng: ChaCha8Rng,
    queue: BinaryHeap<Reverse<InFlight<M>>>,
    seq: u64,
    crashed: BTreeSet<NodeAddr>,
    stats: NetStats,
}

impl<M> fmt::Debug for SimNet<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SimNet")
            .field("in_flight", &self.queue.len())
            .field("crashed", &self.crashed)
            .field("stats", &self.stats)
            .finish()
    }
}

impl<M> SimNet<M> {
    pub fn new(cfg: SimNetConfig) -> Self {
        SimNet {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x0005_eed0_f5e7),
            cfg,
            queue: BinaryHeap::new(),
            seq: 0,
            crashed: BTreeSet::new(),
            stats: NetStats::default(),
        }
    }

    pub fn config(&self) -> &SimNetConfig {
        &self.cfg
    }

    pub fn stats(&self) -> NetStats {
        self.stats
    }

    pub fn in_flight(&self) -> usize {
        self.queue.len()
    }

    pub fn set_drop_probability(&mut self, p: f64) {
        self.cfg.drop_probability = p;
    }

    pub fn add_partition(&mut self, p: Partition) {
        self.cfg.partitions.push(p);
    }

    /// Ends every partition active at `now`.
    pub fn heal(&mut self, now: u64) {
        for p in &mut self.cfg.partitions {
            if p.active(now) {
                p.end = now;
            }
        }
    }

    pub fn partitioned(&self, now: u64, a: NodeAddr, b: NodeAddr) -> bool {
        self.cfg.partitions.iter().any(|p| p.active(now) && p.separates(a, b))
    }

    pub fn crash(&mut self, node: NodeAddr) {
        self.crashed.insert(node);
    }

    pub fn recover(&mut self, node: NodeAddr) {
        self.crashed.remove(&node);
    }

    pub fn is_crashed(&self, node: NodeAddr) -> bool {
        self.crashed.contains(&node)
    }

    fn reachable(&self, now: u64, from: NodeAddr, to: NodeAddr) -> bool {
        !self.is_crashed(from) && !self.is_crashed(to) && !self.partitioned(now, from, to)
    }

    /// Schedules `msg` for delivery after a random delay unless it is lost.
    pub fn send(&mut self, now: u64, from: NodeAddr, to: NodeAddr, msg: M) {
        self.stats.sent += 1;
        if !self.reachable(now, from, to) {
            self.stats.dropped += 1;
            return;
        }
        if self.cfg.drop_probability > 0.0 && self.rng.gen_bool(self.cfg.drop_probability) {
            self.stats.dropped += 1;
            return;
        }
        let delay = self.rng.gen_range(self.cfg.min_delay..=self.cfg.max_delay);
        self.seq += 1;
        self.queue.push(Reverse(InFlight {
            at: now + delay,
            seq: self.seq,
            from,
            to,
            msg,
        }));
    }

    /// Removes every message due at or before `now`, in (time, send order).
    /// Messages whose link broke while in flight are lost.
    pub fn deliver_due(&mut self, now: u64) -> Vec<(NodeAddr, NodeAddr, M)> {
        let mut out = Vec::new();
        while self.queue.peek().is_some_and(|Reverse(m)| m.at <= now) {
            let Reverse(m) = self.queue.pop().unwrap();
            if self.reachable(now, m.from, m.to) {
                self.stats.delivered += 1;
                out.push((m.from, m.to, m.msg));
            } else {
                self.stats.dropped += 1;
            }
        }
        out
    }
}
