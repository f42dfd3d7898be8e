//! Per-channel hash-chained block store with a versioned world state.
//!
//! A [`ChannelLedger`] owns the chain of one channel and the key/value state
//! derived from the valid transactions in it. Blocks enter through a single
//! serialized commit path; readers always see a whole committed prefix.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs::{File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Decoder, Encoder, Hash256};
use crate::identity::{IdentityId, Signature};

#[derive(Debug, Error)]
pub enum LedgerError {
    #[error("sequence gap on {channel}: expected block {expected}, got {got}")]
    SequenceGap {
        channel: ChannelId,
        expected: u64,
        got: u64,
    },
    #[error("chain break on {channel} at block {number}: prev_hash does not match tip")]
    ChainBreak { channel: ChannelId, number: u64 },
    #[error("block {number} on {channel}: data hash does not cover its transactions")]
    DataHashMismatch { channel: ChannelId, number: u64 },
    #[error("block {number} has {flags} validation flags for {txs} transactions")]
    FlagCount { number: u64, flags: usize, txs: usize },
    #[error("block {number} out of range (height {height})")]
    OutOfRange { number: u64, height: u64 },
    #[error("block file: {0}")]
    Io(#[from] io::Error),
    #[error("block file decode: {0}")]
    Codec(#[from] CodecError),
}

/// Symbolic channel name such as `E1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ChannelId(String);

impl ChannelId {
    pub fn new(name: impl Into<String>) -> Self {
        ChannelId(name.into())
    }

    /// Client accounts.
    pub fn clients() -> Self {
        Self::new("E1")
    }

    /// Photo metadata.
    pub fn photos() -> Self {
        Self::new("E2")
    }

    /// Wallets, listings, trades and download grants.
    pub fn trades() -> Self {
        Self::new("E3")
    }

    /// Platform administration.
    pub fn admin() -> Self {
        Self::new("E4")
    }

    pub fn platform() -> [ChannelId; 4] {
        [Self::clients(), Self::photos(), Self::trades(), Self::admin()]
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ChannelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl Canonical for ChannelId {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.str(&self.0);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.string().map(ChannelId)
    }
}

/// Position of the transaction that last wrote a key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Version {
    pub block_num: u64,
    pub tx_index: u64,
}

impl Version {
    pub fn new(block_num: u64, tx_index: u64) -> Self {
        Version { block_num, tx_index }
    }
}

impl fmt::Display for Version {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.block_num, self.tx_index)
    }
}

impl Canonical for Version {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.block_num).u64(self.tx_index);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Version::new(dec.u64()?, dec.u64()?))
    }
}

/// A key read during simulation. `version == None` records that the key was
/// absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvRead {
    pub key: String,
    pub version: Option<Version>,
}

/// A buffered write. `value == None` is a delete marker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KvWrite {
    pub key: String,
    pub value: Option<Vec<u8>>,
}

impl Canonical for KvRead {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.str(&self.key).option(self.version.as_ref());
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(KvRead {
            key: dec.string()?,
            version: dec.option()?,
        })
    }
}

impl Canonical for KvWrite {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.str(&self.key);
        match &self.value {
            None => enc.u64(0),
            Some(v) => enc.u64(1).bytes(v),
        };
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let key = dec.string()?;
        let value = match dec.u64()? {
            0 => None,
            1 => Some(dec.byte_vec()?),
            tag => return Err(CodecError::BadTag { what: "write", tag }),
        };
        Ok(KvWrite { key, value })
    }
}

/// Captured effect of one chaincode execution. Both lists are sorted by key
/// and contain each key at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReadWriteSet {
    pub reads: Vec<KvRead>,
    pub writes: Vec<KvWrite>,
}

impl ReadWriteSet {
    pub fn write_keys(&self) -> impl Iterator<Item = &str> {
        self.writes.iter().map(|w| w.key.as_str())
    }

    pub fn read_keys(&self) -> impl Iterator<Item = &str> {
        self.reads.iter().map(|r| r.key.as_str())
    }
}

impl Canonical for ReadWriteSet {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.list(&self.reads).list(&self.writes);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(ReadWriteSet {
            reads: dec.list()?,
            writes: dec.list()?,
        })
    }
}

/// Event emitted by a chaincode; becomes visible only if the carrying
/// transaction is flagged valid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ChaincodeEvent {
    pub name: String,
    pub payload: Vec<u8>,
}

impl Canonical for ChaincodeEvent {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.str(&self.name).bytes(&self.payload);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(ChaincodeEvent {
            name: dec.string()?,
            payload: dec.byte_vec()?,
        })
    }
}

/// The signed-over part of a proposal. Its hash is the transaction id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalHeader {
    pub channel: ChannelId,
    pub chaincode: String,
    pub function: String,
    pub args: Vec<Vec<u8>>,
    pub creator: IdentityId,
    pub nonce: u64,
    /// Logical client time.
    pub timestamp: u64,
}

impl ProposalHeader {
    pub fn tx_id(&self) -> Hash256 {
        Hash256::of(self)
    }
}

impl Canonical for ProposalHeader {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.channel)
            .str(&self.chaincode)
            .str(&self.function)
            .byte_list(&self.args)
            .value(&self.creator)
            .u64(self.nonce)
            .u64(self.timestamp);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(ProposalHeader {
            channel: dec.value()?,
            chaincode: dec.string()?,
            function: dec.string()?,
            args: dec.byte_list()?,
            creator: dec.value()?,
            nonce: dec.u64()?,
            timestamp: dec.u64()?,
        })
    }
}

/// Digest an endorser signs: binds the proposal (through its id) to the
/// simulated response, read/write set and events.
pub fn result_digest(
    tx_id: &Hash256,
    response: &[u8],
    rwset: &ReadWriteSet,
    events: &[ChaincodeEvent],
) -> Hash256 {
    let mut enc = Encoder::new();
    enc.value(tx_id).bytes(response).value(rwset).list(events);
    Hash256::digest(&enc.finish())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Endorsement {
    pub endorser: IdentityId,
    pub digest: Hash256,
    pub signature: Signature,
}

impl Canonical for Endorsement {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.endorser).value(&self.digest).value(&self.signature);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Endorsement {
            endorser: dec.value()?,
            digest: dec.value()?,
            signature: dec.value()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Transaction {
    pub tx_id: Hash256,
    pub header: ProposalHeader,
    pub creator_signature: Signature,
    pub response: Vec<u8>,
    pub rwset: ReadWriteSet,
    pub events: Vec<ChaincodeEvent>,
    pub endorsements: Vec<Endorsement>,
}

impl Transaction {
    pub fn channel(&self) -> &ChannelId {
        &self.header.channel
    }

    pub fn result_digest(&self) -> Hash256 {
        result_digest(&self.tx_id, &self.response, &self.rwset, &self.events)
    }
}

impl Canonical for Transaction {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.tx_id)
            .value(&self.header)
            .value(&self.creator_signature)
            .bytes(&self.response)
            .value(&self.rwset)
            .list(&self.events)
            .list(&self.endorsements);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Transaction {
            tx_id: dec.value()?,
            header: dec.value()?,
            creator_signature: dec.value()?,
            response: dec.byte_vec()?,
            rwset: dec.value()?,
            events: dec.list()?,
            endorsements: dec.list()?,
        })
    }
}

/// Per-transaction commit verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValidationFlag {
    Valid,
    MvccConflict,
    PolicyFailure,
    AccessDenied,
}

impl ValidationFlag {
    pub fn is_valid(self) -> bool {
        self == ValidationFlag::Valid
    }

    fn tag(self) -> u64 {
        match self {
            ValidationFlag::Valid => 0,
            ValidationFlag::MvccConflict => 1,
            ValidationFlag::PolicyFailure => 2,
            ValidationFlag::AccessDenied => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ValidationFlag::Valid => "valid",
            ValidationFlag::MvccConflict => "mvcc-conflict",
            ValidationFlag::PolicyFailure => "policy-failure",
            ValidationFlag::AccessDenied => "access-denied",
        }
    }
}

impl fmt::Display for ValidationFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Canonical for ValidationFlag {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.tag());
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        match dec.u64()? {
            0 => Ok(ValidationFlag::Valid),
            1 => Ok(ValidationFlag::MvccConflict),
            2 => Ok(ValidationFlag::PolicyFailure),
            3 => Ok(ValidationFlag::AccessDenied),
            tag => Err(CodecError::BadTag { what: "validation flag", tag }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockHeader {
    pub number: u64,
    pub prev_hash: Hash256,
    pub data_hash: Hash256,
}

impl BlockHeader {
    pub fn hash(&self) -> Hash256 {
        compute_block_hash(self)
    }
}

impl Canonical for BlockHeader {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.number).value(&self.prev_hash).value(&self.data_hash);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(BlockHeader {
            number: dec.u64()?,
            prev_hash: dec.value()?,
            data_hash: dec.value()?,
        })
    }
}

/// Digest of the canonical header encoding.
pub fn compute_block_hash(header: &BlockHeader) -> Hash256 {
    Hash256::of(header)
}

/// Digest over the ordered transaction list.
pub fn compute_data_hash(transactions: &[Transaction]) -> Hash256 {
    let mut enc = Encoder::new();
    enc.list(transactions);
    Hash256::digest(&enc.finish())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub header: BlockHeader,
    pub transactions: Vec<Transaction>,
    /// Empty until the block is committed by a peer.
    pub validation_flags: Vec<ValidationFlag>,
}

impl Block {
    pub fn genesis() -> Self {
        Self::new(0, Hash256::ZERO, Vec::new())
    }

    pub fn new(number: u64, prev_hash: Hash256, transactions: Vec<Transaction>) -> Self {
        Block {
            header: BlockHeader {
                number,
                prev_hash,
                data_hash: compute_data_hash(&transactions),
            },
            transactions,
            validation_flags: Vec::new(),
        }
    }

    pub fn number(&self) -> u64 {
        self.header.number
    }

    pub fn hash(&self) -> Hash256 {
        self.header.hash()
    }

    pub fn invalid_count(&self) -> usize {
        self.validation_flags.iter().filter(|f| !f.is_valid()).count()
    }

    /// Same block without commit-time flags.
    pub fn unflagged(&self) -> Block {
        Block {
            validation_flags: Vec::new(),
            ..self.clone()
        }
    }
}

impl Canonical for Block {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.header)
            .list(&self.transactions)
            .list(&self.validation_flags);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Block {
            header: dec.value()?,
            transactions: dec.list()?,
            validation_flags: dec.list()?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VersionedValue {
    pub value: Vec<u8>,
    pub version: Version,
}

/// key → (value, version) derived from the valid transactions of a chain.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct WorldState {
    entries: BTreeMap<String, VersionedValue>,
}

impl WorldState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &str) -> Option<&VersionedValue> {
        self.entries.get(key)
    }

    pub fn version(&self, key: &str) -> Option<Version> {
        self.entries.get(key).map(|v| v.version)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries whose key starts with `prefix`, in key order.
    pub fn scan_prefix<'a>(
        &'a self,
        prefix: &'a str,
    ) -> impl Iterator<Item = (&'a String, &'a VersionedValue)> + 'a {
        self.entries
            .range(prefix.to_string()..)
            .take_while(move |(k, _)| k.starts_with(prefix))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &VersionedValue)> {
        self.entries.iter()
    }

    pub fn apply(&mut self, writes: &[KvWrite], version: Version) {
        for w in writes {
            match &w.value {
                Some(v) => {
                    self.entries.insert(
                        w.key.clone(),
                        VersionedValue {
                            value: v.clone(),
                            version,
                        },
                    );
                }
                None => {
                    self.entries.remove(&w.key);
                }
            }
        }
    }

    pub fn digest(&self) -> Hash256 {
        Hash256::of(self)
    }
}

impl Canonical for WorldState {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.entries.len() as u64);
        for (k, v) in &self.entries {
            enc.str(k).bytes(&v.value).value(&v.version);
        }
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let n = dec.u64()?;
        let mut entries = BTreeMap::new();
        for _ in 0..n {
            let key = dec.string()?;
            let value = dec.byte_vec()?;
            let version = dec.value()?;
            entries.insert(key, VersionedValue { value, version });
        }
        Ok(WorldState { entries })
    }
}

/// One-line structured summary of a committed block, as printed by the chain
/// inspector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BlockSummary {
    pub number: u64,
    pub hash: String,
    pub txs: usize,
    pub invalid: usize,
    pub flags: Vec<ValidationFlag>,
}

impl BlockSummary {
    pub fn of(block: &Block) -> Self {
        BlockSummary {
            number: block.number(),
            hash: block.hash().short(),
            txs: block.transactions.len(),
            invalid: block.invalid_count(),
            flags: block.validation_flags.clone(),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("summary serializes")
    }
}

/// Position and verdict of a committed transaction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxLocation {
    pub block: u64,
    pub index: u64,
    pub flag: ValidationFlag,
}

#[derive(Debug, Default)]
struct LedgerInner {
    blocks: Vec<Block>,
    state: WorldState,
    tx_locations: HashMap<Hash256, TxLocation>,
}

impl LedgerInner {
    fn tip_hash(&self) -> Option<Hash256> {
        self.blocks.last().map(Block::hash)
    }

    fn check_linkage(&self, channel: &ChannelId, header: &BlockHeader) -> Result<(), LedgerError> {
        let height = self.blocks.len() as u64;
        if header.number != height {
            return Err(LedgerError::SequenceGap {
                channel: channel.clone(),
                expected: height,
                got: header.number,
            });
        }
        let expected_prev = self.tip_hash().unwrap_or(Hash256::ZERO);
        if header.prev_hash != expected_prev {
            return Err(LedgerError::ChainBreak {
                channel: channel.clone(),
                number: header.number,
            });
        }
        Ok(())
    }

    fn push(&mut self, block: Block) {
        let number = block.number();
        for (i, (tx, flag)) in block
            .transactions
            .iter()
            .zip(block.validation_flags.iter())
            .enumerate()
        {
            if flag.is_valid() {
                self.state.apply(&tx.rwset.writes, Version::new(number, i as u64));
            }
            self.tx_locations.entry(tx.tx_id).or_insert(TxLocation {
                block: number,
                index: i as u64,
                flag: *flag,
            });
        }
        self.blocks.push(block);
    }
}

/// Read-only view of a committed prefix, valid while held.
pub struct LedgerView<'a> {
    inner: RwLockReadGuard<'a, LedgerInner>,
}

impl LedgerView<'_> {
    pub fn state(&self) -> &WorldState {
        &self.inner.state
    }

    pub fn height(&self) -> u64 {
        self.inner.blocks.len() as u64
    }

    pub fn blocks(&self) -> &[Block] {
        &self.inner.blocks
    }
}

/// Chain plus world state of one channel.
pub struct ChannelLedger {
    channel: ChannelId,
    inner: RwLock<LedgerInner>,
    commit_lock: Mutex<Option<File>>,
    path: Option<PathBuf>,
}

impl fmt::Debug for ChannelLedger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChannelLedger")
            .field("channel", &self.channel)
            .field("height", &self.height())
            .finish()
    }
}

impl ChannelLedger {
    /// Empty in-memory ledger (height 0).
    pub fn new(channel: ChannelId) -> Self {
        ChannelLedger {
            channel,
            inner: RwLock::new(LedgerInner::default()),
            commit_lock: Mutex::new(None),
            path: None,
        }
    }

    /// Opens (or creates) an append-only block file. Existing blocks are
    /// loaded, linkage-checked and replayed into the world state.
    pub fn open(channel: ChannelId, path: &Path) -> Result<Self, LedgerError> {
        let blocks = if path.exists() {
            read_block_file(path)?
        } else {
            Vec::new()
        };
        let mut inner = LedgerInner::default();
        for block in blocks {
            inner.check_linkage(&channel, &block.header)?;
            check_block_contents(&channel, &block)?;
            inner.push(block);
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(ChannelLedger {
            channel,
            inner: RwLock::new(inner),
            commit_lock: Mutex::new(Some(file)),
            path: Some(path.to_path_buf()),
        })
    }

    pub fn channel(&self) -> &ChannelId {
        &self.channel
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn height(&self) -> u64 {
        self.inner.read().blocks.len() as u64
    }

    pub fn tip_hash(&self) -> Option<Hash256> {
        self.inner.read().tip_hash()
    }

    /// Appends a committed block (flags filled in) and applies the writes of
    /// its valid transactions. Invalid transactions stay in the block.
    pub fn append_block(&self, block: Block) -> Result<(), LedgerError> {
        self.commit_with(block, |_, b| Ok(b.validation_flags.clone())).map(|_| ())
    }

    /// Serialized commit: checks linkage, asks `validate` for the flags
    /// against the current state, then persists and applies the block as one
    /// step. Readers never observe a half-applied block.
    pub fn commit_with<F>(&self, mut block: Block, validate: F) -> Result<Vec<ValidationFlag>, LedgerError>
    where
        F: FnOnce(&WorldState, &Block) -> Result<Vec<ValidationFlag>, LedgerError>,
    {
        let mut file = self.commit_lock.lock();
        {
            let inner = self.inner.read();
            inner.check_linkage(&self.channel, &block.header)?;
            if block.header.data_hash != compute_data_hash(&block.transactions) {
                return Err(LedgerError::DataHashMismatch {
                    channel: self.channel.clone(),
                    number: block.number(),
                });
            }
            let flags = validate(&inner.state, &block)?;
            if flags.len() != block.transactions.len() {
                return Err(LedgerError::FlagCount {
                    number: block.number(),
                    flags: flags.len(),
                    txs: block.transactions.len(),
                });
            }
            block.validation_flags = flags;
        }
        if let Some(f) = file.as_mut() {
            write_record(f, &block)?;
        }
        let flags = block.validation_flags.clone();
        self.inner.write().push(block);
        Ok(flags)
    }

    pub fn get_block(&self, number: u64) -> Result<Block, LedgerError> {
        let inner = self.inner.read();
        inner
            .blocks
            .get(number as usize)
            .cloned()
            .ok_or(LedgerError::OutOfRange {
                number,
                height: inner.blocks.len() as u64,
            })
    }

    pub fn get_state(&self, key: &str) -> Option<(Vec<u8>, Version)> {
        self.inner
            .read()
            .state
            .get(key)
            .map(|v| (v.value.clone(), v.version))
    }

    pub fn tx_location(&self, tx_id: &Hash256) -> Option<TxLocation> {
        self.inner.read().tx_locations.get(tx_id).copied()
    }

    /// Holds a read lock on the committed prefix.
    pub fn view(&self) -> LedgerView<'_> {
        LedgerView {
            inner: self.inner.read(),
        }
    }

    pub fn state_snapshot(&self) -> WorldState {
        self.inner.read().state.clone()
    }

    /// Full hash-linkage and data-hash check over the stored chain.
    pub fn verify_chain(&self) -> Result<(), LedgerError> {
        verify_blocks(&self.channel, &self.inner.read().blocks)
    }

    /// Recomputes the world state from genesis using the stored flags.
    pub fn replay(&self) -> Result<WorldState, LedgerError> {
        replay_blocks(&self.channel, &self.inner.read().blocks)
    }

    pub fn inspect(&self, from: u64, to: Option<u64>) -> Vec<BlockSummary> {
        let inner = self.inner.read();
        let end = to.map_or(inner.blocks.len() as u64, |t| t.min(inner.blocks.len() as u64));
        (from..end)
            .map(|n| BlockSummary::of(&inner.blocks[n as usize]))
            .collect()
    }
}

fn check_block_contents(channel: &ChannelId, block: &Block) -> Result<(), LedgerError> {
    if block.header.data_hash != compute_data_hash(&block.transactions) {
        return Err(LedgerError::DataHashMismatch {
            channel: channel.clone(),
            number: block.number(),
        });
    }
    if block.validation_flags.len() != block.transactions.len() {
        return Err(LedgerError::FlagCount {
            number: block.number(),
            flags: block.validation_flags.len(),
            txs: block.transactions.len(),
        });
    }
    Ok(())
}

/// Checks that `blocks` form a chain from genesis.
pub fn verify_blocks(channel: &ChannelId, blocks: &[Block]) -> Result<(), LedgerError> {
    let mut prev = Hash256::ZERO;
    for (i, block) in blocks.iter().enumerate() {
        if block.number() != i as u64 {
            return Err(LedgerError::SequenceGap {
                channel: channel.clone(),
                expected: i as u64,
                got: block.number(),
            });
        }
        if block.header.prev_hash != prev {
            return Err(LedgerError::ChainBreak {
                channel: channel.clone(),
                number: block.number(),
            });
        }
        check_block_contents(channel, block)?;
        prev = block.hash();
    }
    Ok(())
}

/// Rebuilds the world state of a verified chain from its stored flags.
pub fn replay_blocks(channel: &ChannelId, blocks: &[Block]) -> Result<WorldState, LedgerError> {
    verify_blocks(channel, blocks)?;
    let mut state = WorldState::new();
    for block in blocks {
        for (i, (tx, flag)) in block
            .transactions
            .iter()
            .zip(&block.validation_flags)
            .enumerate()
        {
            if flag.is_valid() {
                state.apply(&tx.rwset.writes, Version::new(block.number(), i as u64));
            }
        }
    }
    Ok(state)
}

fn write_record(file: &mut File, block: &Block) -> io::Result<()> {
    let body = block.to_canonical();
    let len = u32::try_from(body.len())
        .map_err(|_| io::Error::new(io::ErrorKind::InvalidInput, "block too large"))?;
    let mut record = Vec::with_capacity(body.len() + 4);
    record.extend_from_slice(&len.to_be_bytes());
    record.extend_from_slice(&body);
    file.write_all(&record)?;
    file.flush()
}

/// Reads every record of a block file.
pub fn read_block_file(path: &Path) -> Result<Vec<Block>, LedgerError> {
    let mut raw = Vec::new();
    File::open(path)?.read_to_end(&mut raw)?;
    let mut blocks = Vec::new();
    let mut rest = raw.as_slice();
    while !rest.is_empty() {
        if rest.len() < 4 {
            return Err(CodecError::UnexpectedEof {
                wanted: 4,
                remaining: rest.len(),
            }
            .into());
        }
        let len = u32::from_be_bytes(rest[..4].try_into().unwrap()) as usize;
        rest = &rest[4..];
        if rest.len() < len {
            return Err(CodecError::UnexpectedEof {
                wanted: len,
                remaining: rest.len(),
            }
            .into());
        }
        blocks.push(Block::from_canonical(&rest[..len])?);
        rest = &rest[len..];
    }
    Ok(blocks)
}
