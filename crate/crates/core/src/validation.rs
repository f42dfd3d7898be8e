//! Validating phase: endorsement policy, access and MVCC checks per
//! transaction, then whole-block commit.

use std::collections::{BTreeSet, HashSet};

use crate::chaincode::ChaincodeRegistry;
use crate::endorsement::{endorsement_verifies, EndorsementPolicy};
use crate::identity::{AccessMode, Msp};
use crate::ledger::{ChaincodeEvent, ChannelLedger, LedgerError, Transaction, ValidationFlag, WorldState};

/// Flags one transaction. `touched` holds the keys read or written by
/// earlier valid transactions of the same block.
pub fn validate_transaction(
    msp: &Msp,
    registry: &ChaincodeRegistry,
    tx: &Transaction,
    state: &WorldState,
    policy: EndorsementPolicy,
    touched: &HashSet<String>,
) -> ValidationFlag {
    if !policy_satisfied(msp, registry, tx, policy) {
        return ValidationFlag::PolicyFailure;
    }
    if !msp.check_access_by_id(tx.header.creator, tx.channel(), AccessMode::Write) {
        return ValidationFlag::AccessDenied;
    }
    for read in &tx.rwset.reads {
        if touched.contains(&read.key) || state.version(&read.key) != read.version {
            return ValidationFlag::MvccConflict;
        }
    }
    if tx.rwset.writes.iter().any(|w| touched.contains(&w.key)) {
        return ValidationFlag::MvccConflict;
    }
    ValidationFlag::Valid
}

fn policy_satisfied(msp: &Msp, registry: &ChaincodeRegistry, tx: &Transaction, policy: EndorsementPolicy) -> bool {
    if tx.header.tx_id() != tx.tx_id {
        return false;
    }
    if registry.lookup(tx.channel(), &tx.header.chaincode).is_none() {
        return false;
    }
    if !msp.verify_by_id(tx.header.creator, &tx.tx_id.0, &tx.creator_signature) {
        return false;
    }
    let digest = tx.result_digest();
    let mut endorsers = BTreeSet::new();
    for e in &tx.endorsements {
        if e.digest != digest || !endorsement_verifies(msp, e) {
            return false;
        }
        endorsers.insert(e.endorser);
    }
    endorsers.len() >= policy.required()
}

/// Flags every transaction of a block in order against `state`, applying the
/// first-writer-wins rule inside the block.
pub fn validate_block(
    msp: &Msp,
    registry: &ChaincodeRegistry,
    state: &WorldState,
    transactions: &[Transaction],
) -> Vec<ValidationFlag> {
    let mut touched = HashSet::new();
    transactions
        .iter()
        .map(|tx| {
            let policy = registry.policy(tx.channel()).unwrap_or_default();
            let flag = validate_transaction(msp, registry, tx, state, policy, &touched);
            if flag.is_valid() {
                touched.extend(tx.rwset.read_keys().map(str::to_string));
                touched.extend(tx.rwset.write_keys().map(str::to_string));
            }
            flag
        })
        .collect()
}

/// Result of committing one block on one peer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitOutcome {
    pub number: u64,
    pub flags: Vec<ValidationFlag>,
    /// Events of the valid transactions, tagged with their tx index.
    pub events: Vec<(u64, ChaincodeEvent)>,
}

/// Validates and appends `block` (flags are recomputed; any incoming flags
/// are ignored). Transactions addressed to another channel are flagged
/// policy-failure.
pub fn commit_block(
    ledger: &ChannelLedger,
    msp: &Msp,
    registry: &ChaincodeRegistry,
    block: crate::ledger::Block,
) -> Result<CommitOutcome, LedgerError> {
    let channel = ledger.channel().clone();
    let number = block.number();
    let txs = block.transactions.clone();
    let flags = ledger.commit_with(block, |state, b| {
        let mut flags = validate_block(msp, registry, state, &b.transactions);
        for (flag, tx) in flags.iter_mut().zip(&b.transactions) {
            if tx.channel() != &channel && flag.is_valid() {
                *flag = ValidationFlag::PolicyFailure;
            }
        }
        Ok(flags)
    })?;
    let events = txs
        .into_iter()
        .zip(&flags)
        .enumerate()
        .filter(|(_, (_, f))| f.is_valid())
        .flat_map(|(i, (tx, _))| tx.events.into_iter().map(move |e| (i as u64, e)))
        .collect();
    Ok(CommitOutcome { number, flags, events })
}
