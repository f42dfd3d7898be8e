//! Execution phase: signed proposals, simulation on endorsers and assembly of
//! matching endorsements into a transaction.

use std::collections::BTreeMap;
use std::sync::Arc;

use rand::RngCore;
use thiserror::Error;

use crate::chaincode::{execute, ChaincodeError, ChaincodeRegistry};
use crate::codec::Hash256;
use crate::identity::{AccessMode, Identity, KeyPair, Msp, Role, Signature};
use crate::ledger::{
    result_digest, ChaincodeEvent, ChannelId, Endorsement, ProposalHeader, ReadWriteSet, Transaction, WorldState,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EndorsementError {
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("proposal signature does not verify")]
    BadProposalSignature,
    #[error("no chaincode {chaincode:?} on channel {channel}")]
    UnknownChaincode { channel: ChannelId, chaincode: String },
    #[error("simulation failed: {0}")]
    Simulation(#[from] ChaincodeError),
    #[error("insufficient endorsements: {got} of {required}")]
    InsufficientEndorsements { got: usize, required: usize },
    #[error("divergent results: best agreement {best} of {required}")]
    DivergentResults { best: usize, required: usize },
    #[error("invalid endorsement policy: {required} of {endorsers}")]
    InvalidPolicy { required: usize, endorsers: usize },
}

/// k-of-N: a transaction needs `required` endorsements over one result.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EndorsementPolicy {
    required: usize,
}

impl EndorsementPolicy {
    pub const DEFAULT_REQUIRED: usize = 2;

    /// Panics on `k == 0`; use [`EndorsementPolicy::checked`] for config input.
    pub fn new(required: usize) -> Self {
        assert!(required >= 1, "endorsement policy needs k >= 1");
        EndorsementPolicy { required }
    }

    pub fn checked(required: usize, endorsers: usize) -> Result<Self, EndorsementError> {
        if required == 0 || required > endorsers {
            return Err(EndorsementError::InvalidPolicy { required, endorsers });
        }
        Ok(EndorsementPolicy { required })
    }

    pub fn required(self) -> usize {
        self.required
    }
}

impl Default for EndorsementPolicy {
    fn default() -> Self {
        Self::new(Self::DEFAULT_REQUIRED)
    }
}

/// A signed invocation request. The signature covers the header hash, which
/// is also the transaction id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Proposal {
    pub header: ProposalHeader,
    pub signature: Signature,
}

impl Proposal {
    pub fn tx_id(&self) -> Hash256 {
        self.header.tx_id()
    }
}

/// Builds and signs a proposal with a fresh random nonce.
#[allow(clippy::too_many_arguments)]
pub fn create_proposal<R: RngCore>(
    msp: &Msp,
    client: &Identity,
    key: &KeyPair,
    channel: &ChannelId,
    chaincode: &str,
    function: &str,
    args: Vec<Vec<u8>>,
    timestamp: u64,
    rng: &mut R,
) -> Result<Proposal, EndorsementError> {
    if !msp.check_channel_access(client, channel, AccessMode::Write) {
        return Err(EndorsementError::AccessDenied(format!(
            "{} ({}) may not write {}",
            client.name, client.role, channel
        )));
    }
    let header = ProposalHeader {
        channel: channel.clone(),
        chaincode: chaincode.to_string(),
        function: function.to_string(),
        args,
        creator: client.id,
        nonce: rng.next_u64(),
        timestamp,
    };
    let signature = key.sign(&header.tx_id().0);
    Ok(Proposal { header, signature })
}

/// What an endorser hands back: the simulated result and its signature.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProposalResponse {
    pub response: Vec<u8>,
    pub rwset: ReadWriteSet,
    pub events: Vec<ChaincodeEvent>,
    pub endorsement: Endorsement,
}

/// A peer acting in its endorsing role.
#[derive(Debug, Clone)]
pub struct Endorser {
    identity: Identity,
    key: Arc<KeyPair>,
    msp: Arc<Msp>,
    registry: Arc<ChaincodeRegistry>,
}

impl Endorser {
    pub fn new(identity: Identity, key: Arc<KeyPair>, msp: Arc<Msp>, registry: Arc<ChaincodeRegistry>) -> Self {
        Endorser {
            identity,
            key,
            msp,
            registry,
        }
    }

    pub fn identity(&self) -> &Identity {
        &self.identity
    }

    /// Runs the proposal against `snapshot` (the endorser's committed state)
    /// and signs the result digest. Never mutates `snapshot`.
    pub fn simulate(&self, proposal: &Proposal, snapshot: &WorldState) -> Result<ProposalResponse, EndorsementError> {
        let header = &proposal.header;
        let tx_id = header.tx_id();
        let creator = self
            .msp
            .get(header.creator)
            .filter(|c| self.msp.verify_signature(c, &tx_id.0, &proposal.signature))
            .ok_or(EndorsementError::BadProposalSignature)?;
        let installed = self
            .registry
            .lookup(&header.channel, &header.chaincode)
            .ok_or_else(|| EndorsementError::UnknownChaincode {
                channel: header.channel.clone(),
                chaincode: header.chaincode.clone(),
            })?;
        let result = execute(
            installed,
            &header.function,
            &header.args,
            snapshot,
            &creator,
            tx_id,
            header.timestamp,
        )?;
        let digest = result_digest(&tx_id, &result.response, &result.rwset, &result.events);
        Ok(ProposalResponse {
            response: result.response,
            rwset: result.rwset,
            events: result.events,
            endorsement: Endorsement {
                endorser: self.identity.id,
                digest,
                signature: self.key.sign(&digest.0),
            },
        })
    }
}

/// True iff `e` is a correctly signed endorsement by an enrolled peer.
pub fn endorsement_verifies(msp: &Msp, e: &Endorsement) -> bool {
    match msp.get(e.endorser) {
        Some(peer) if peer.role == Role::Peer => msp.verify_signature(&peer, &e.digest.0, &e.signature),
        _ => false,
    }
}

/// Groups responses by result digest and builds a transaction from the
/// largest group that meets the policy. Responses whose digest does not match
/// their own content, or whose signature fails, are discarded. On ties the
/// smallest digest wins so the choice is deterministic.
pub fn assemble_transaction(
    msp: &Msp,
    proposal: &Proposal,
    responses: &[ProposalResponse],
    policy: EndorsementPolicy,
) -> Result<Transaction, EndorsementError> {
    let tx_id = proposal.tx_id();
    let mut groups: BTreeMap<Hash256, Vec<&ProposalResponse>> = BTreeMap::new();
    let mut usable = 0;
    for r in responses {
        let digest = result_digest(&tx_id, &r.response, &r.rwset, &r.events);
        if digest != r.endorsement.digest || !endorsement_verifies(msp, &r.endorsement) {
            continue;
        }
        let group = groups.entry(digest).or_default();
        if group.iter().any(|g| g.endorsement.endorser == r.endorsement.endorser) {
            continue;
        }
        group.push(r);
        usable += 1;
    }
    let k = policy.required();
    if usable < k {
        return Err(EndorsementError::InsufficientEndorsements { got: usable, required: k });
    }
    let best = groups
        .iter()
        .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.cmp(a.0)))
        .map(|(_, g)| g)
        .expect("usable > 0 implies a group");
    if best.len() < k {
        return Err(EndorsementError::DivergentResults {
            best: best.len(),
            required: k,
        });
    }
    let first = best[0];
    Ok(Transaction {
        tx_id,
        header: proposal.header.clone(),
        creator_signature: proposal.signature,
        response: first.response.clone(),
        rwset: first.rwset.clone(),
        events: first.events.clone(),
        endorsements: best.iter().map(|r| r.endorsement.clone()).collect(),
    })
}
