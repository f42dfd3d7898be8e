//! In-process deployment: orderers and peers wired over the simulated
//! network, plus the client side of the pipeline (endorse, order, wait for
//! commit).

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chaincode::{execute, ChaincodeError, ChaincodeRegistry};
use crate::codec::Hash256;
use crate::config::{ConfigError, NetworkConfig};
use crate::endorsement::{
    assemble_transaction, create_proposal, Endorser, EndorsementError, EndorsementPolicy, Proposal, ProposalResponse,
};
use crate::identity::{AccessMatrix, AccessMode, Identity, KeyPair, Msp, MspError, Role};
use crate::ledger::{Block, ChannelId, ChannelLedger, LedgerError, Transaction, TxLocation, ValidationFlag};
use crate::ordering::{
    NodeAddr, Orderer, OrdererOutput, Partition, RaftMessage, SimNet, SubmitResult, DELIVERY_WINDOW,
};
use crate::validation::commit_block;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Endorsement(#[from] EndorsementError),
    #[error(transparent)]
    Msp(#[from] MspError),
    #[error(transparent)]
    Ledger(#[from] LedgerError),
    #[error("query failed: {0}")]
    Query(ChaincodeError),
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("unknown channel {0}")]
    UnknownChannel(ChannelId),
    #[error("unknown node {0}")]
    UnknownNode(NodeAddr),
    #[error("no live peer")]
    NoPeer,
    #[error("ordering service unavailable")]
    Unavailable,
    #[error("transaction {0} not committed in time")]
    Timeout(Hash256),
    #[error("transaction {tx_id} committed as {flag}")]
    Invalid { tx_id: Hash256, flag: ValidationFlag },
}

impl PipelineError {
    /// The chaincode error behind a failed simulation or query, if any.
    pub fn chaincode_error(&self) -> Option<&ChaincodeError> {
        match self {
            PipelineError::Endorsement(EndorsementError::Simulation(e)) | PipelineError::Query(e) => Some(e),
            _ => None,
        }
    }
}

/// Wire messages between nodes.
#[derive(Debug, Clone)]
pub enum Message {
    Raft(RaftMessage),
    Block { channel: ChannelId, block: Arc<Block> },
    Ack { channel: ChannelId, height: u64 },
}

/// A fault applied when the simulation reaches a given tick.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultAction {
    Crash { node: NodeAddr },
    Restart { node: NodeAddr },
    DropRate { probability: f64 },
}

/// A client identity with its signing key.
#[derive(Debug, Clone)]
pub struct Client {
    pub identity: Identity,
    pub key: Arc<KeyPair>,
}

/// Endorsing and committing peer holding every channel.
#[derive(Debug)]
pub struct Peer {
    index: usize,
    endorser: Endorser,
    ledgers: BTreeMap<ChannelId, ChannelLedger>,
    buffered: BTreeMap<ChannelId, BTreeMap<u64, Arc<Block>>>,
    msp: Arc<Msp>,
    registry: Arc<ChaincodeRegistry>,
}

impl Peer {
    pub fn index(&self) -> usize {
        self.index
    }

    pub fn identity(&self) -> &Identity {
        self.endorser.identity()
    }

    pub fn ledger(&self, channel: &ChannelId) -> Option<&ChannelLedger> {
        self.ledgers.get(channel)
    }

    pub fn ledgers(&self) -> impl Iterator<Item = (&ChannelId, &ChannelLedger)> {
        self.ledgers.iter()
    }

    pub fn height(&self, channel: &ChannelId) -> u64 {
        self.ledgers.get(channel).map_or(0, ChannelLedger::height)
    }

    /// Simulates on this peer's latest committed state.
    pub fn endorse(&self, proposal: &Proposal) -> Result<ProposalResponse, EndorsementError> {
        let ledger = self
            .ledgers
            .get(&proposal.header.channel)
            .ok_or_else(|| EndorsementError::UnknownChaincode {
                channel: proposal.header.channel.clone(),
                chaincode: proposal.header.chaincode.clone(),
            })?;
        let view = ledger.view();
        self.endorser.simulate(proposal, view.state())
    }

    /// Accepts a delivered block: commits it if it is next, buffers it if it
    /// is ahead, ignores it if already held. Returns the height to ack.
    fn on_block(&mut self, channel: &ChannelId, block: Arc<Block>) -> Option<u64> {
        let ledger = self.ledgers.get(channel)?;
        let height = ledger.height();
        let n = block.number();
        if n > height && n < height + 2 * DELIVERY_WINDOW {
            self.buffered.entry(channel.clone()).or_default().insert(n, block);
        } else if n == height {
            self.commit(channel, &block);
            let buf = self.buffered.entry(channel.clone()).or_default();
            loop {
                let next = self.ledgers[channel].height();
                buf.retain(|&k, _| k >= next);
                let Some(b) = buf.remove(&next) else { break };
                let ledger = &self.ledgers[channel];
                let _ = commit_block(ledger, &self.msp, &self.registry, (*b).clone());
            }
        }
        Some(self.ledgers[channel].height())
    }

    fn commit(&self, channel: &ChannelId, block: &Block) {
        // Orderers agree on the chain, so a linkage error here only means a
        // duplicate raced past the height check; the ack corrects the sender.
        let _ = commit_block(&self.ledgers[channel], &self.msp, &self.registry, block.clone());
    }
}

/// Outcome of a committed, valid invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Committed {
    pub tx_id: Hash256,
    pub response: Vec<u8>,
    pub location: TxLocation,
}

pub struct Network {
    cfg: NetworkConfig,
    now: u64,
    msp: Arc<Msp>,
    registry: Arc<ChaincodeRegistry>,
    policy: EndorsementPolicy,
    net: SimNet<Message>,
    orderers: Vec<Orderer>,
    peers: Vec<Peer>,
    rng: ChaCha8Rng,
    leader_hint: usize,
    trace: Sha256,
    faults: BTreeMap<u64, Vec<FaultAction>>,
}

impl std::fmt::Debug for Network {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Network")
            .field("now", &self.now)
            .field("orderers", &self.orderers.len())
            .field("peers", &self.peers.len())
            .field("net", &self.net)
            .finish()
    }
}

impl Network {
    /// Builds the network: MSP with one identity per node, genesis block on
    /// every channel of every peer, platform chaincodes installed. No leader
    /// exists yet; see [`Network::elect_leader`].
    pub fn new(cfg: NetworkConfig) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let msp = Arc::new(Msp::new(AccessMatrix::platform_default()).with_session_ttl(cfg.session_ttl));
        let policy = EndorsementPolicy::checked(cfg.endorsement_required, cfg.endorsers)?;
        let registry = Arc::new(ChaincodeRegistry::platform(policy));
        let seed = cfg.simnet.seed;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut peers = Vec::with_capacity(cfg.endorsers);
        for i in 0..cfg.endorsers {
            let key = Arc::new(KeyPair::generate(&mut rng));
            let identity = msp.register_identity(&format!("peer{i}"), Role::Peer, key.public_key())?;
            let mut ledgers = BTreeMap::new();
            for c in &cfg.channels {
                let ledger = match &cfg.data_dir {
                    Some(dir) => open_fresh(dir, i, c)?,
                    None => ChannelLedger::new(c.clone()),
                };
                ledger.append_block(genesis_committed())?;
                ledgers.insert(c.clone(), ledger);
            }
            peers.push(Peer {
                index: i,
                endorser: Endorser::new(identity, key, msp.clone(), registry.clone()),
                ledgers,
                buffered: BTreeMap::new(),
                msp: msp.clone(),
                registry: registry.clone(),
            });
        }
        let cluster: Vec<usize> = (0..cfg.orderers).collect();
        let mut orderers = Vec::with_capacity(cfg.orderers);
        for i in 0..cfg.orderers {
            let key = KeyPair::generate(&mut rng);
            msp.register_identity(&format!("orderer{i}"), Role::Orderer, key.public_key())?;
            orderers.push(Orderer::new(
                i,
                &cluster,
                &cfg.channels,
                cfg.endorsers,
                cfg.raft,
                cfg.block_cut,
                cfg.retransmit_interval,
                seed.wrapping_mul(1_000_003).wrapping_add(i as u64 + 1),
            ));
        }
        Ok(Network {
            net: SimNet::new(cfg.simnet.clone()),
            cfg,
            now: 0,
            msp,
            registry,
            policy,
            orderers,
            peers,
            rng,
            leader_hint: 0,
            faults: BTreeMap::new(),
            trace: Sha256::new(),
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.cfg
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn msp(&self) -> &Arc<Msp> {
        &self.msp
    }

    pub fn registry(&self) -> &Arc<ChaincodeRegistry> {
        &self.registry
    }

    pub fn policy(&self) -> EndorsementPolicy {
        self.policy
    }

    pub fn peers(&self) -> &[Peer] {
        &self.peers
    }

    pub fn peer(&self, i: usize) -> Option<&Peer> {
        self.peers.get(i)
    }

    pub fn orderers(&self) -> &[Orderer] {
        &self.orderers
    }

    pub fn channels(&self) -> &[ChannelId] {
        &self.cfg.channels
    }

    pub fn sim(&self) -> &SimNet<Message> {
        &self.net
    }

    pub fn is_crashed(&self, node: NodeAddr) -> bool {
        self.net.is_crashed(node)
    }

    /// Digest over every delivered message so far.
    pub fn trace_digest(&self) -> Hash256 {
        Hash256(self.trace.clone().finalize().into())
    }

    /// The live leader with the highest term, if any.
    pub fn leader(&self) -> Option<usize> {
        self.orderers
            .iter()
            .enumerate()
            .filter(|(i, o)| !self.net.is_crashed(NodeAddr::Orderer(*i)) && o.raft().is_leader())
            .max_by_key(|(_, o)| o.raft().term())
            .map(|(i, _)| i)
    }

    /// First live peer; the gateway reads committed state from it.
    pub fn anchor(&self) -> Result<&Peer, PipelineError> {
        self.peers
            .iter()
            .find(|p| !self.net.is_crashed(NodeAddr::Peer(p.index)))
            .ok_or(PipelineError::NoPeer)
    }

    pub fn anchor_ledger(&self, channel: &ChannelId) -> Result<&ChannelLedger, PipelineError> {
        self.anchor()?
            .ledger(channel)
            .ok_or_else(|| PipelineError::UnknownChannel(channel.clone()))
    }

    /// Registers a client with a fresh key drawn from the network's RNG.
    pub fn enroll(&mut self, name: &str, role: Role, secret: Option<&str>) -> Result<Client, PipelineError> {
        let key = Arc::new(KeyPair::generate(&mut self.rng));
        let identity = match secret {
            Some(s) => self.msp.register_with_credential(name, role, key.public_key(), s)?,
            None => self.msp.register_identity(name, role, key.public_key())?,
        };
        Ok(Client { identity, key })
    }

    /// Writes the MSP registry next to the peer chains, if persisting.
    pub fn save_msp(&self) -> std::io::Result<()> {
        match &self.cfg.data_dir {
            Some(dir) => self.msp.save(&dir.join("msp.json")),
            None => Ok(()),
        }
    }

    // Simulation control.

    pub fn step(&mut self) {
        self.now += 1;
        let now = self.now;
        while let Some(entry) = self.faults.first_entry() {
            if *entry.key() > now {
                break;
            }
            for action in entry.remove() {
                self.apply_fault(action);
            }
        }
        for (from, to, msg) in self.net.deliver_due(now) {
            self.record(from, to, &msg);
            self.dispatch(from, to, msg);
        }
        for i in 0..self.orderers.len() {
            if self.net.is_crashed(NodeAddr::Orderer(i)) {
                continue;
            }
            let out = self.orderers[i].tick(now);
            self.send_orderer_outputs(i, out);
        }
    }

    pub fn run(&mut self, ticks: u64) {
        for _ in 0..ticks {
            self.step();
        }
    }

    /// Steps until `done` holds or `max_ticks` pass; true on success.
    pub fn run_until(&mut self, max_ticks: u64, mut done: impl FnMut(&Network) -> bool) -> bool {
        for _ in 0..max_ticks {
            if done(self) {
                return true;
            }
            self.step();
        }
        done(self)
    }

    pub fn elect_leader(&mut self, max_ticks: u64) -> Option<usize> {
        self.run_until(max_ticks, |n| n.leader().is_some());
        self.leader()
    }

    /// Steps until every live peer holds every block the live orderers have.
    pub fn settle(&mut self, max_ticks: u64) -> bool {
        self.run_until(max_ticks, |n| n.converged())
    }

    /// True iff all live peers have the same height as the tallest live
    /// orderer on every channel.
    pub fn converged(&self) -> bool {
        self.cfg.channels.iter().all(|c| {
            let target = self
                .orderers
                .iter()
                .enumerate()
                .filter(|(i, _)| !self.net.is_crashed(NodeAddr::Orderer(*i)))
                .filter_map(|(_, o)| o.height(c))
                .max()
                .unwrap_or(1);
            self.peers
                .iter()
                .filter(|p| !self.net.is_crashed(NodeAddr::Peer(p.index)))
                .all(|p| p.height(c) == target)
        })
    }

    fn check_node(&self, node: NodeAddr) -> Result<(), PipelineError> {
        let ok = match node {
            NodeAddr::Orderer(i) => i < self.orderers.len(),
            NodeAddr::Peer(i) => i < self.peers.len(),
        };
        if ok {
            Ok(())
        } else {
            Err(PipelineError::UnknownNode(node))
        }
    }

    pub fn crash(&mut self, node: NodeAddr) -> Result<(), PipelineError> {
        self.check_node(node)?;
        self.net.crash(node);
        Ok(())
    }

    pub fn restart(&mut self, node: NodeAddr) -> Result<(), PipelineError> {
        self.check_node(node)?;
        if self.net.is_crashed(node) {
            self.net.recover(node);
            if let NodeAddr::Orderer(i) = node {
                self.orderers[i].restart(self.now);
            }
        }
        Ok(())
    }

    /// Isolates `nodes` from everyone else for `duration` ticks from now.
    pub fn partition(&mut self, nodes: BTreeSet<NodeAddr>, duration: u64) -> Result<(), PipelineError> {
        self.add_partition(Partition {
            start: self.now,
            end: self.now + duration,
            nodes,
        })
    }

    /// Schedules a partition over absolute ticks.
    pub fn add_partition(&mut self, p: Partition) -> Result<(), PipelineError> {
        for n in &p.nodes {
            self.check_node(*n)?;
        }
        if p.start >= p.end {
            return Err(ConfigError(format!("empty partition window {}..{}", p.start, p.end)).into());
        }
        self.net.add_partition(p);
        Ok(())
    }

    /// Applies `action` at tick `at` (on the next step if `at` has passed).
    pub fn schedule(&mut self, at: u64, action: FaultAction) -> Result<(), PipelineError> {
        match action {
            FaultAction::Crash { node } | FaultAction::Restart { node } => self.check_node(node)?,
            FaultAction::DropRate { probability } => {
                if !(0.0..1.0).contains(&probability) {
                    return Err(ConfigError(format!("drop probability {probability} not in [0, 1)")).into());
                }
            }
        }
        self.faults.entry(at).or_default().push(action);
        Ok(())
    }

    fn apply_fault(&mut self, action: FaultAction) {
        // Targets were checked when scheduled.
        let _ = match action {
            FaultAction::Crash { node } => self.crash(node),
            FaultAction::Restart { node } => self.restart(node),
            FaultAction::DropRate { probability } => {
                self.set_drop_probability(probability);
                Ok(())
            }
        };
    }

    pub fn heal(&mut self) {
        self.net.heal(self.now + 1);
    }

    pub fn set_drop_probability(&mut self, p: f64) {
        self.net.set_drop_probability(p);
    }

    fn record(&mut self, from: NodeAddr, to: NodeAddr, msg: &Message) {
        let kind = match msg {
            Message::Raft(m) => format!("raft{}", m.term()),
            Message::Block { channel, block } => format!("block{channel}/{}", block.number()),
            Message::Ack { channel, height } => format!("ack{channel}/{height}"),
        };
        self.trace.update(format!("{} {from} {to} {kind};", self.now).as_bytes());
    }

    fn dispatch(&mut self, from: NodeAddr, to: NodeAddr, msg: Message) {
        let now = self.now;
        match (to, msg) {
            (NodeAddr::Orderer(i), Message::Raft(m)) => {
                if let NodeAddr::Orderer(src) = from {
                    let out = self.orderers[i].handle_raft(src, m, now);
                    self.send_orderer_outputs(i, out);
                }
            }
            (NodeAddr::Orderer(i), Message::Ack { channel, height }) => {
                if let NodeAddr::Peer(p) = from {
                    let out = self.orderers[i].on_ack(p, &channel, height);
                    self.send_orderer_outputs(i, out);
                }
            }
            (NodeAddr::Peer(p), Message::Block { channel, block }) => {
                if let Some(height) = self.peers[p].on_block(&channel, block) {
                    self.net.send(now, to, from, Message::Ack { channel, height });
                }
            }
            _ => {}
        }
    }

    fn send_orderer_outputs(&mut self, from: usize, out: Vec<OrdererOutput>) {
        let src = NodeAddr::Orderer(from);
        for o in out {
            match o {
                OrdererOutput::Raft { to, msg } => self.net.send(self.now, src, NodeAddr::Orderer(to), Message::Raft(msg)),
                OrdererOutput::Deliver { peer, channel, block } => {
                    self.net.send(self.now, src, NodeAddr::Peer(peer), Message::Block { channel, block })
                }
            }
        }
    }

    // Client side of the pipeline.

    fn chaincode_name(&self, channel: &ChannelId) -> Result<String, PipelineError> {
        if !self.cfg.channels.contains(channel) {
            return Err(PipelineError::UnknownChannel(channel.clone()));
        }
        self.registry
            .for_channel(channel)
            .map(|c| c.descriptor.name.clone())
            .ok_or_else(|| PipelineError::UnknownChannel(channel.clone()))
    }

    /// Creates a signed proposal for `client` at the current tick.
    pub fn create_proposal(
        &mut self,
        client: &Client,
        channel: &ChannelId,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<Proposal, PipelineError> {
        let cc = self.chaincode_name(channel)?;
        Ok(create_proposal(
            &self.msp,
            &client.identity,
            &client.key,
            channel,
            &cc,
            function,
            args,
            self.now,
            &mut self.rng,
        )?)
    }

    /// Fans the proposal out to every live peer.
    pub fn endorse(&self, proposal: &Proposal) -> Vec<Result<ProposalResponse, EndorsementError>> {
        self.peers
            .iter()
            .filter(|p| !self.net.is_crashed(NodeAddr::Peer(p.index)))
            .map(|p| p.endorse(proposal))
            .collect()
    }

    /// Endorses and assembles. A simulation error shared by every endorser
    /// is reported as such rather than as missing endorsements.
    pub fn endorse_and_assemble(&self, proposal: &Proposal) -> Result<Transaction, PipelineError> {
        let mut ok = Vec::new();
        let mut first_err = None;
        for r in self.endorse(proposal) {
            match r {
                Ok(resp) => ok.push(resp),
                Err(e) => {
                    first_err.get_or_insert(e);
                }
            }
        }
        if ok.len() < self.policy.required() {
            if let Some(e) = first_err {
                return Err(e.into());
            }
        }
        Ok(assemble_transaction(&self.msp, proposal, &ok, self.policy)?)
    }

    /// Proposal plus endorsement, retrying once after a short delay when
    /// endorsers disagree.
    pub fn prepare(
        &mut self,
        client: &Client,
        channel: &ChannelId,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<Transaction, PipelineError> {
        let mut retried = false;
        loop {
            let proposal = self.create_proposal(client, channel, function, args.clone())?;
            match self.endorse_and_assemble(&proposal) {
                Err(PipelineError::Endorsement(EndorsementError::DivergentResults { .. })) if !retried => {
                    retried = true;
                    self.run(2 * self.cfg.simnet.max_delay.max(1));
                }
                other => return other,
            }
        }
    }

    /// One submission attempt, following redirects.
    pub fn submit(&mut self, tx: &Transaction) -> SubmitResult {
        let n = self.orderers.len();
        let tx = Arc::new(tx.clone());
        let mut target = self.leader_hint % n;
        for _ in 0..=n {
            if self.net.is_crashed(NodeAddr::Orderer(target)) {
                target = (target + 1) % n;
                continue;
            }
            let (result, out) = self.orderers[target].submit(tx.clone(), self.now);
            self.send_orderer_outputs(target, out);
            match result {
                SubmitResult::Accepted { .. } => {
                    self.leader_hint = target;
                    return result;
                }
                SubmitResult::Redirected(l) if l != target => target = l,
                _ => target = (target + 1) % n,
            }
        }
        SubmitResult::Unavailable
    }

    /// Submits, stepping the network while no leader accepts.
    pub fn submit_until_accepted(&mut self, tx: &Transaction, max_ticks: u64) -> Result<(), PipelineError> {
        let deadline = self.now + max_ticks;
        loop {
            if let SubmitResult::Accepted { .. } = self.submit(tx) {
                return Ok(());
            }
            if self.now >= deadline {
                return Err(PipelineError::Unavailable);
            }
            self.run(10);
        }
    }

    /// Where the anchor peer committed `tx_id`, if it has.
    pub fn tx_status(&self, channel: &ChannelId, tx_id: &Hash256) -> Option<TxLocation> {
        self.anchor().ok()?.ledger(channel)?.tx_location(tx_id)
    }

    /// Steps until the anchor peer commits `tx`, resubmitting the same
    /// transaction on timeout.
    pub fn await_commit(&mut self, tx: &Transaction) -> Result<TxLocation, PipelineError> {
        let channel = tx.channel().clone();
        for attempt in 0..=self.cfg.resubmissions {
            if attempt > 0 {
                self.submit_until_accepted(tx, self.cfg.commit_timeout)?;
            }
            let timeout = self.cfg.commit_timeout;
            let id = tx.tx_id;
            if self.run_until(timeout, |n| n.tx_status(&channel, &id).is_some()) {
                return Ok(self.tx_status(&channel, &id).expect("just observed"));
            }
        }
        Err(PipelineError::Timeout(tx.tx_id))
    }

    /// Full pipeline for one invocation; succeeds only if the transaction
    /// commits flagged valid.
    pub fn invoke(
        &mut self,
        client: &Client,
        channel: &ChannelId,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<Committed, PipelineError> {
        let tx = self.prepare(client, channel, function, args)?;
        self.submit_until_accepted(&tx, self.cfg.commit_timeout)?;
        let location = self.await_commit(&tx)?;
        if !location.flag.is_valid() {
            return Err(PipelineError::Invalid {
                tx_id: tx.tx_id,
                flag: location.flag,
            });
        }
        Ok(Committed {
            tx_id: tx.tx_id,
            response: tx.response,
            location,
        })
    }

    /// Read-only chaincode call against the anchor peer's committed state.
    pub fn query(
        &self,
        identity: &Identity,
        channel: &ChannelId,
        function: &str,
        args: Vec<Vec<u8>>,
    ) -> Result<Vec<u8>, PipelineError> {
        self.chaincode_name(channel)?;
        if !self.msp.check_channel_access(identity, channel, AccessMode::Read) {
            return Err(PipelineError::AccessDenied(format!("{} may not read {channel}", identity.name)));
        }
        let installed = self.registry.for_channel(channel).expect("checked above");
        let ledger = self.anchor_ledger(channel)?;
        let view = ledger.view();
        execute(installed, function, &args, view.state(), identity, Hash256::ZERO, self.now)
            .map(|r| r.response)
            .map_err(PipelineError::Query)
    }
}

fn genesis_committed() -> Block {
    Block::genesis()
}

fn open_fresh(dir: &Path, peer: usize, channel: &ChannelId) -> Result<ChannelLedger, LedgerError> {
    let peer_dir = dir.join(format!("peer{peer}"));
    std::fs::create_dir_all(&peer_dir)?;
    let path = peer_dir.join(format!("{channel}.blocks"));
    if path.exists() {
        std::fs::remove_file(&path)?;
    }
    ChannelLedger::open(channel.clone(), &path)
}
