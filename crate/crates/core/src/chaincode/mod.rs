//! Deterministic chaincode runtime and the four platform chaincodes.
//!
//! A chaincode runs against an immutable [`WorldState`] snapshot through a
//! [`TxContext`], which records every read with the version it observed and
//! buffers every write. Nothing touches committed state here; the captured
//! [`ReadWriteSet`] is what endorsers sign and validators check.

use std::collections::BTreeMap;
use std::sync::Arc;

use thiserror::Error;

use crate::codec::{CodecError, Hash256};
use crate::endorsement::EndorsementPolicy;
use crate::identity::Identity;
use crate::ledger::{ChaincodeEvent, ChannelId, KvRead, KvWrite, ReadWriteSet, Version, WorldState};

pub mod admin;
pub mod clients;
pub mod model;
pub mod photos;
pub mod trades;

pub use model::{Account, CoinAmount, Listing, MintRecord, PhotoPublished, PhotoRecord, PriceTier, Prices, TradeRecord};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChaincodeError {
    #[error("unknown function {0:?}")]
    UnknownFunction(String),
    #[error("expected {expected} arguments, got {got}")]
    ArgCount { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("account {0:?} already exists")]
    AccountExists(String),
    #[error("invoker is not the owner of this record")]
    NotOwner,
    #[error("bad prices: {0}")]
    BadPrices(String),
    #[error("a photo needs at least one category")]
    NoCategory,
    #[error("photo {0} already published")]
    PhotoExists(String),
    #[error("only admins may do this")]
    NotAdmin,
    #[error("amount must be positive")]
    BadAmount,
    #[error("listing for {0} already exists")]
    ListingExists(String),
    #[error("unknown photo {0}")]
    UnknownPhoto(String),
    #[error("insufficient funds: balance {balance}, price {price}")]
    InsufficientFunds { balance: CoinAmount, price: CoinAmount },
    #[error("cannot buy your own photo")]
    SelfPurchase,
    #[error("coin amount overflow")]
    Overflow,
    #[error("stored value corrupt: {0}")]
    Corrupt(String),
}

impl From<CodecError> for ChaincodeError {
    fn from(e: CodecError) -> Self {
        ChaincodeError::Corrupt(e.to_string())
    }
}

/// Execution context of one simulated transaction.
pub struct TxContext<'a> {
    snapshot: &'a WorldState,
    invoker: &'a Identity,
    tx_id: Hash256,
    timestamp: u64,
    reads: BTreeMap<String, Option<Version>>,
    writes: BTreeMap<String, Option<Vec<u8>>>,
    events: Vec<ChaincodeEvent>,
}

impl<'a> TxContext<'a> {
    pub fn new(snapshot: &'a WorldState, invoker: &'a Identity, tx_id: Hash256, timestamp: u64) -> Self {
        TxContext {
            snapshot,
            invoker,
            tx_id,
            timestamp,
            reads: BTreeMap::new(),
            writes: BTreeMap::new(),
            events: Vec::new(),
        }
    }

    pub fn invoker(&self) -> &Identity {
        self.invoker
    }

    pub fn tx_id(&self) -> Hash256 {
        self.tx_id
    }

    pub fn timestamp(&self) -> u64 {
        self.timestamp
    }

    /// Reads `key`, seeing this transaction's own buffered writes first.
    /// Only snapshot reads are recorded in the read set.
    pub fn get_state(&mut self, key: &str) -> Option<Vec<u8>> {
        if let Some(buffered) = self.writes.get(key) {
            return buffered.clone();
        }
        let entry = self.snapshot.get(key);
        self.reads
            .entry(key.to_string())
            .or_insert_with(|| entry.map(|e| e.version));
        entry.map(|e| e.value.clone())
    }

    pub fn put_state(&mut self, key: &str, value: Vec<u8>) {
        self.writes.insert(key.to_string(), Some(value));
    }

    pub fn del_state(&mut self, key: &str) {
        self.writes.insert(key.to_string(), None);
    }

    /// All live entries under `prefix`, merged with buffered writes, in key
    /// order.
    pub fn scan_prefix(&mut self, prefix: &str) -> Vec<(String, Vec<u8>)> {
        let mut merged: BTreeMap<String, Option<Vec<u8>>> = BTreeMap::new();
        for (k, v) in self.snapshot.scan_prefix(prefix) {
            if !self.writes.contains_key(k) {
                self.reads.entry(k.clone()).or_insert(Some(v.version));
            }
            merged.insert(k.clone(), Some(v.value.clone()));
        }
        for (k, v) in self.writes.range(prefix.to_string()..) {
            if !k.starts_with(prefix) {
                break;
            }
            merged.insert(k.clone(), v.clone());
        }
        merged
            .into_iter()
            .filter_map(|(k, v)| v.map(|v| (k, v)))
            .collect()
    }

    pub fn emit(&mut self, name: &str, payload: Vec<u8>) {
        self.events.push(ChaincodeEvent {
            name: name.to_string(),
            payload,
        });
    }

    fn finish(self, response: Vec<u8>) -> SimulationResult {
        SimulationResult {
            response,
            rwset: ReadWriteSet {
                reads: self
                    .reads
                    .into_iter()
                    .map(|(key, version)| KvRead { key, version })
                    .collect(),
                writes: self
                    .writes
                    .into_iter()
                    .map(|(key, value)| KvWrite { key, value })
                    .collect(),
            },
            events: self.events,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SimulationResult {
    pub response: Vec<u8>,
    pub rwset: ReadWriteSet,
    pub events: Vec<ChaincodeEvent>,
}

pub trait Chaincode: Send + Sync {
    fn name(&self) -> &'static str;
    fn functions(&self) -> &'static [&'static str];
    fn invoke(&self, ctx: &mut TxContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChaincodeDescriptor {
    pub name: String,
    pub channel: ChannelId,
    pub functions: Vec<String>,
    pub endorsement_policy: EndorsementPolicy,
}

/// A chaincode bound to its channel.
#[derive(Clone)]
pub struct Installed {
    pub descriptor: ChaincodeDescriptor,
    pub code: Arc<dyn Chaincode>,
}

impl std::fmt::Debug for Installed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Installed").field("descriptor", &self.descriptor).finish()
    }
}

impl Installed {
    pub fn new(code: Arc<dyn Chaincode>, channel: ChannelId, policy: EndorsementPolicy) -> Self {
        Installed {
            descriptor: ChaincodeDescriptor {
                name: code.name().to_string(),
                channel,
                functions: code.functions().iter().map(|f| f.to_string()).collect(),
                endorsement_policy: policy,
            },
            code,
        }
    }
}

/// Runs `function` of an installed chaincode. The result depends only on the
/// inputs, so every endorser executing the same proposal on the same
/// snapshot produces an identical result.
pub fn execute(
    installed: &Installed,
    function: &str,
    args: &[Vec<u8>],
    snapshot: &WorldState,
    invoker: &Identity,
    tx_id: Hash256,
    timestamp: u64,
) -> Result<SimulationResult, ChaincodeError> {
    if !installed.descriptor.functions.iter().any(|f| f == function) {
        return Err(ChaincodeError::UnknownFunction(function.to_string()));
    }
    let mut ctx = TxContext::new(snapshot, invoker, tx_id, timestamp);
    let response = installed.code.invoke(&mut ctx, function, args)?;
    Ok(ctx.finish(response))
}

/// Exactly one chaincode per channel.
#[derive(Debug, Clone, Default)]
pub struct ChaincodeRegistry {
    by_channel: BTreeMap<ChannelId, Installed>,
}

impl ChaincodeRegistry {
    /// The four platform chaincodes, all under `policy`.
    pub fn platform(policy: EndorsementPolicy) -> Self {
        let mut reg = Self::default();
        reg.install(Installed::new(Arc::new(clients::Clients), ChannelId::clients(), policy));
        reg.install(Installed::new(Arc::new(photos::Photos), ChannelId::photos(), policy));
        reg.install(Installed::new(Arc::new(trades::Trades), ChannelId::trades(), policy));
        reg.install(Installed::new(Arc::new(admin::Admin), ChannelId::admin(), policy));
        reg
    }

    /// Installs `cc`, replacing whatever ran on its channel before.
    pub fn install(&mut self, cc: Installed) {
        self.by_channel.insert(cc.descriptor.channel.clone(), cc);
    }

    pub fn for_channel(&self, channel: &ChannelId) -> Option<&Installed> {
        self.by_channel.get(channel)
    }

    pub fn lookup(&self, channel: &ChannelId, name: &str) -> Option<&Installed> {
        self.for_channel(channel).filter(|cc| cc.descriptor.name == name)
    }

    pub fn policy(&self, channel: &ChannelId) -> Option<EndorsementPolicy> {
        self.for_channel(channel).map(|c| c.descriptor.endorsement_policy)
    }

    pub fn channels(&self) -> impl Iterator<Item = &ChannelId> {
        self.by_channel.keys()
    }
}

// Argument helpers shared by the built-ins.

pub(crate) fn expect_args(args: &[Vec<u8>], n: usize) -> Result<(), ChaincodeError> {
    if args.len() != n {
        return Err(ChaincodeError::ArgCount {
            expected: n,
            got: args.len(),
        });
    }
    Ok(())
}

pub(crate) fn arg_str(args: &[Vec<u8>], i: usize) -> Result<String, ChaincodeError> {
    String::from_utf8(args[i].clone())
        .map_err(|_| ChaincodeError::InvalidArgument(format!("argument {i} is not utf-8")))
}

pub(crate) fn arg_u64(args: &[Vec<u8>], i: usize) -> Result<u64, ChaincodeError> {
    let raw: [u8; 8] = args[i]
        .as_slice()
        .try_into()
        .map_err(|_| ChaincodeError::InvalidArgument(format!("argument {i} is not a u64")))?;
    Ok(u64::from_be_bytes(raw))
}

pub(crate) fn arg_hash(args: &[Vec<u8>], i: usize) -> Result<Hash256, ChaincodeError> {
    let s = arg_str(args, i)?;
    Hash256::from_hex(&s).map_err(|_| ChaincodeError::InvalidArgument(format!("argument {i} is not a hash")))
}
