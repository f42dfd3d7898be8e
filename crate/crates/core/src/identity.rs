//! Membership service: who may connect, with which role, and which channels
//! each role may read or write.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ed25519_dalek::{Signer as _, SigningKey, Verifier as _, VerifyingKey};
use parking_lot::RwLock;
use rand::{CryptoRng, RngCore};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codec::{Canonical, CodecError, Decoder, Encoder};
use crate::ledger::ChannelId;

/// Default session lifetime in seconds.
pub const DEFAULT_SESSION_TTL: u64 = 3600;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MspError {
    #[error("identity name {0:?} is already registered")]
    DuplicateName(String),
    #[error("unknown role {0:?}")]
    UnknownRole(String),
    #[error("unknown identity {0:?}")]
    UnknownIdentity(String),
    #[error("bad credential")]
    BadCredential,
    #[error("identity {0:?} has no login credential")]
    NoCredential(String),
    #[error("session token is invalid or revoked")]
    InvalidSession,
    #[error("session token expired")]
    SessionExpired,
    #[error("identity {0:?} is not enrolled")]
    NotEnrolled(String),
    #[error("empty identity name")]
    EmptyName,
    #[error("registry document: {0}")]
    Document(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct IdentityId(pub u64);

impl fmt::Display for IdentityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "id-{}", self.0)
    }
}

impl Canonical for IdentityId {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.0);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        dec.u64().map(IdentityId)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Photographer,
    Customer,
    Admin,
    Peer,
    Orderer,
}

impl Role {
    pub const ALL: [Role; 5] = [
        Role::Photographer,
        Role::Customer,
        Role::Admin,
        Role::Peer,
        Role::Orderer,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Photographer => "photographer",
            Role::Customer => "customer",
            Role::Admin => "admin",
            Role::Peer => "peer",
            Role::Orderer => "orderer",
        }
    }

    fn tag(self) -> u64 {
        match self {
            Role::Photographer => 0,
            Role::Customer => 1,
            Role::Admin => 2,
            Role::Peer => 3,
            Role::Orderer => 4,
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = MspError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| MspError::UnknownRole(s.to_string()))
    }
}

impl Canonical for Role {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.tag());
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let tag = dec.u64()?;
        Role::ALL
            .into_iter()
            .find(|r| r.tag() == tag)
            .ok_or(CodecError::BadTag { what: "role", tag })
    }
}

/// Ed25519 verification key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct PublicKey(pub [u8; 32]);

impl fmt::Debug for PublicKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "PublicKey({})", hex::encode(&self.0[..6]))
    }
}

impl Serialize for PublicKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(self.0))
    }
}

impl<'de> Deserialize<'de> for PublicKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        let raw = hex::decode(&s).map_err(serde::de::Error::custom)?;
        let arr: [u8; 32] = raw
            .try_into()
            .map_err(|_| serde::de::Error::custom("public key must be 32 bytes"))?;
        Ok(PublicKey(arr))
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
pub struct Signature(pub [u8; 64]);

impl fmt::Debug for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Signature({}..)", hex::encode(&self.0[..6]))
    }
}

impl Signature {
    /// Parses a signature from raw bytes; anything other than 64 bytes is
    /// rejected.
    pub fn from_slice(raw: &[u8]) -> Option<Self> {
        raw.try_into().ok().map(Signature)
    }
}

impl Canonical for Signature {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.bytes(&self.0);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let raw = dec.bytes()?;
        Signature::from_slice(raw).ok_or_else(|| CodecError::Invalid("signature length".into()))
    }
}

/// Private signing key held by a participant.
#[derive(Clone)]
pub struct KeyPair {
    signing: SigningKey,
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair").field("public", &self.public_key()).finish()
    }
}

impl KeyPair {
    pub fn generate<R: RngCore + CryptoRng>(rng: &mut R) -> Self {
        KeyPair {
            signing: SigningKey::generate(rng),
        }
    }

    pub fn from_seed(seed: [u8; 32]) -> Self {
        KeyPair {
            signing: SigningKey::from_bytes(&seed),
        }
    }

    pub fn public_key(&self) -> PublicKey {
        PublicKey(self.signing.verifying_key().to_bytes())
    }

    pub fn sign(&self, message: &[u8]) -> Signature {
        Signature(self.signing.sign(message).to_bytes())
    }
}

/// Verifies `signature` over `message` under `key`. Malformed keys verify
/// nothing.
pub fn verify_with_key(key: &PublicKey, message: &[u8], signature: &Signature) -> bool {
    match VerifyingKey::from_bytes(&key.0) {
        Ok(vk) => verify_parsed(&vk, message, signature),
        Err(_) => false,
    }
}

fn verify_parsed(vk: &VerifyingKey, message: &[u8], signature: &Signature) -> bool {
    let sig = ed25519_dalek::Signature::from_bytes(&signature.0);
    vk.verify(message, &sig).is_ok()
}

/// Enrolled participant record.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Identity {
    pub id: IdentityId,
    pub name: String,
    pub role: Role,
    pub public_key: PublicKey,
    pub enrolled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Access {
    None,
    Read,
    Write,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AccessMode {
    Read,
    Write,
}

impl AccessMode {
    fn required(self) -> Access {
        match self {
            AccessMode::Read => Access::Read,
            AccessMode::Write => Access::Write,
        }
    }
}

/// (role, channel) → access level. Lookups outside the configured channels
/// yield [`Access::None`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccessMatrix {
    grants: BTreeMap<(Role, ChannelId), Access>,
}

impl AccessMatrix {
    /// All-`None` matrix over `channels`.
    pub fn closed(channels: &[ChannelId]) -> Self {
        let grants = Role::ALL
            .iter()
            .flat_map(|r| channels.iter().map(move |c| ((*r, c.clone()), Access::None)))
            .collect();
        AccessMatrix { grants }
    }

    /// Least-privilege matrix for the four platform channels: clients
    /// (E1), photos (E2), trades (E3), administration (E4). Per-record
    /// ownership is enforced inside the chaincodes.
    pub fn platform_default() -> Self {
        use Access::*;
        let [e1, e2, e3, e4] = ChannelId::platform();
        let mut m = Self::closed(&ChannelId::platform());
        for (role, ch, level) in [
            (Role::Customer, &e1, Write),
            (Role::Customer, &e2, Read),
            (Role::Customer, &e3, Write),
            (Role::Photographer, &e1, Write),
            (Role::Photographer, &e2, Write),
            (Role::Photographer, &e3, Read),
        ] {
            m.set(role, ch.clone(), level);
        }
        for ch in [e1, e2, e3, e4] {
            m.set(Role::Admin, ch, Write);
        }
        m
    }

    pub fn set(&mut self, role: Role, channel: ChannelId, access: Access) {
        self.grants.insert((role, channel), access);
    }

    pub fn get(&self, role: Role, channel: &ChannelId) -> Access {
        self.grants
            .get(&(role, channel.clone()))
            .copied()
            .unwrap_or(Access::None)
    }

    pub fn allows(&self, role: Role, channel: &ChannelId, mode: AccessMode) -> bool {
        self.get(role, channel) >= mode.required()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionToken {
    pub token: String,
    pub subject: String,
    pub expires_at: u64,
}

#[derive(Debug, Clone)]
struct Credential {
    salt: [u8; 16],
    hash: [u8; 32],
}

impl Credential {
    fn new(secret: &str) -> Self {
        let mut salt = [0u8; 16];
        rand::thread_rng().fill_bytes(&mut salt);
        Credential {
            salt,
            hash: Self::hash(&salt, secret),
        }
    }

    fn hash(salt: &[u8], secret: &str) -> [u8; 32] {
        let mut h = Sha256::new();
        h.update(salt);
        h.update(secret.as_bytes());
        h.finalize().into()
    }

    fn matches(&self, secret: &str) -> bool {
        let candidate = Self::hash(&self.salt, secret);
        // Constant-time compare.
        candidate
            .iter()
            .zip(self.hash.iter())
            .fold(0u8, |acc, (a, b)| acc | (a ^ b))
            == 0
    }
}

#[derive(Debug, Clone)]
struct Entry {
    identity: Identity,
    verifying: Option<VerifyingKey>,
    credential: Option<Credential>,
}

#[derive(Debug, Default)]
struct Registry {
    by_id: BTreeMap<IdentityId, Entry>,
    by_name: HashMap<String, IdentityId>,
    next_id: u64,
    sessions: HashMap<String, SessionToken>,
}

/// On-disk form of one registry record.
#[derive(Debug, Serialize, Deserialize)]
struct RecordDoc {
    id: IdentityId,
    name: String,
    role: Role,
    public_key: PublicKey,
    enrolled: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    credential_salt: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    credential_hash: Option<String>,
}

#[derive(Debug, Serialize, Deserialize)]
struct RegistryDoc {
    identities: Vec<RecordDoc>,
}

/// The membership registry. All operations take the registry lock, so
/// registrations and checks are linearizable.
#[derive(Debug)]
pub struct Msp {
    registry: RwLock<Registry>,
    access: AccessMatrix,
    session_ttl: u64,
}

impl Msp {
    pub fn new(access: AccessMatrix) -> Self {
        Msp {
            registry: RwLock::new(Registry::default()),
            access,
            session_ttl: DEFAULT_SESSION_TTL,
        }
    }

    pub fn with_session_ttl(mut self, ttl: u64) -> Self {
        self.session_ttl = ttl;
        self
    }

    pub fn access_matrix(&self) -> &AccessMatrix {
        &self.access
    }

    pub fn register_identity(
        &self,
        name: &str,
        role: Role,
        public_key: PublicKey,
    ) -> Result<Identity, MspError> {
        self.register_inner(name, role, public_key, None)
    }

    /// Registers an identity together with the login secret used by
    /// [`Msp::authenticate`].
    pub fn register_with_credential(
        &self,
        name: &str,
        role: Role,
        public_key: PublicKey,
        secret: &str,
    ) -> Result<Identity, MspError> {
        self.register_inner(name, role, public_key, Some(Credential::new(secret)))
    }

    fn register_inner(
        &self,
        name: &str,
        role: Role,
        public_key: PublicKey,
        credential: Option<Credential>,
    ) -> Result<Identity, MspError> {
        if name.trim().is_empty() {
            return Err(MspError::EmptyName);
        }
        let mut reg = self.registry.write();
        if reg.by_name.contains_key(name) {
            return Err(MspError::DuplicateName(name.to_string()));
        }
        let id = IdentityId(reg.next_id);
        reg.next_id += 1;
        let identity = Identity {
            id,
            name: name.to_string(),
            role,
            public_key,
            enrolled: true,
        };
        reg.by_name.insert(name.to_string(), id);
        reg.by_id.insert(
            id,
            Entry {
                identity: identity.clone(),
                verifying: VerifyingKey::from_bytes(&public_key.0).ok(),
                credential,
            },
        );
        Ok(identity)
    }

    pub fn set_enrolled(&self, name: &str, enrolled: bool) -> Result<(), MspError> {
        let mut reg = self.registry.write();
        let id = *reg
            .by_name
            .get(name)
            .ok_or_else(|| MspError::UnknownIdentity(name.to_string()))?;
        reg.by_id.get_mut(&id).unwrap().identity.enrolled = enrolled;
        Ok(())
    }

    pub fn get(&self, id: IdentityId) -> Option<Identity> {
        self.registry.read().by_id.get(&id).map(|e| e.identity.clone())
    }

    pub fn get_by_name(&self, name: &str) -> Option<Identity> {
        let reg = self.registry.read();
        reg.by_name
            .get(name)
            .and_then(|id| reg.by_id.get(id))
            .map(|e| e.identity.clone())
    }

    pub fn identities(&self) -> Vec<Identity> {
        self.registry
            .read()
            .by_id
            .values()
            .map(|e| e.identity.clone())
            .collect()
    }

    /// Checks a login secret and issues a session token valid until
    /// `now + ttl` (seconds).
    pub fn authenticate(&self, name: &str, secret: &str, now: u64) -> Result<SessionToken, MspError> {
        let mut reg = self.registry.write();
        let id = *reg
            .by_name
            .get(name)
            .ok_or_else(|| MspError::UnknownIdentity(name.to_string()))?;
        let entry = &reg.by_id[&id];
        let cred = entry
            .credential
            .as_ref()
            .ok_or_else(|| MspError::NoCredential(name.to_string()))?;
        if !cred.matches(secret) {
            return Err(MspError::BadCredential);
        }
        if !entry.identity.enrolled {
            return Err(MspError::NotEnrolled(name.to_string()));
        }
        let mut raw = [0u8; 32];
        rand::thread_rng().fill_bytes(&mut raw);
        let session = SessionToken {
            token: hex::encode(raw),
            subject: name.to_string(),
            expires_at: now.saturating_add(self.session_ttl),
        };
        reg.sessions.insert(session.token.clone(), session.clone());
        Ok(session)
    }

    /// Resolves a bearer token to its identity.
    pub fn validate_session(&self, token: &str, now: u64) -> Result<Identity, MspError> {
        let reg = self.registry.read();
        let session = reg.sessions.get(token).ok_or(MspError::InvalidSession)?;
        if now >= session.expires_at {
            return Err(MspError::SessionExpired);
        }
        let entry = reg
            .by_name
            .get(&session.subject)
            .and_then(|id| reg.by_id.get(id))
            .ok_or(MspError::InvalidSession)?;
        if !entry.identity.enrolled {
            return Err(MspError::NotEnrolled(session.subject.clone()));
        }
        Ok(entry.identity.clone())
    }

    pub fn revoke_session(&self, token: &str) -> bool {
        self.registry.write().sessions.remove(token).is_some()
    }

    /// True iff `signature` is a valid signature over `message` by the
    /// private counterpart of the registered key of `identity`.
    pub fn verify_signature(&self, identity: &Identity, message: &[u8], signature: &Signature) -> bool {
        self.verify_by_id(identity.id, message, signature)
    }

    pub fn verify_by_id(&self, id: IdentityId, message: &[u8], signature: &Signature) -> bool {
        let reg = self.registry.read();
        match reg.by_id.get(&id) {
            Some(Entry {
                verifying: Some(vk),
                identity,
                ..
            }) if identity.enrolled => verify_parsed(vk, message, signature),
            _ => false,
        }
    }

    /// True iff the identity is registered here, enrolled, and its role is
    /// granted at least `mode` on `channel`.
    pub fn check_channel_access(&self, identity: &Identity, channel: &ChannelId, mode: AccessMode) -> bool {
        self.check_access_by_id(identity.id, channel, mode)
    }

    pub fn check_access_by_id(&self, id: IdentityId, channel: &ChannelId, mode: AccessMode) -> bool {
        let reg = self.registry.read();
        match reg.by_id.get(&id) {
            Some(e) if e.identity.enrolled => self.access.allows(e.identity.role, channel, mode),
            _ => false,
        }
    }

    pub fn to_document(&self) -> String {
        let reg = self.registry.read();
        let doc = RegistryDoc {
            identities: reg
                .by_id
                .values()
                .map(|e| RecordDoc {
                    id: e.identity.id,
                    name: e.identity.name.clone(),
                    role: e.identity.role,
                    public_key: e.identity.public_key,
                    enrolled: e.identity.enrolled,
                    credential_salt: e.credential.as_ref().map(|c| hex::encode(c.salt)),
                    credential_hash: e.credential.as_ref().map(|c| hex::encode(c.hash)),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("registry serializes")
    }

    pub fn from_document(text: &str, access: AccessMatrix) -> Result<Self, MspError> {
        let doc: RegistryDoc =
            serde_json::from_str(text).map_err(|e| MspError::Document(e.to_string()))?;
        let msp = Msp::new(access);
        {
            let mut reg = msp.registry.write();
            for rec in doc.identities {
                if reg.by_name.contains_key(&rec.name) {
                    return Err(MspError::DuplicateName(rec.name));
                }
                let credential = match (rec.credential_salt, rec.credential_hash) {
                    (Some(s), Some(h)) => Some(Credential {
                        salt: decode_fixed(&s)?,
                        hash: decode_fixed(&h)?,
                    }),
                    _ => None,
                };
                reg.next_id = reg.next_id.max(rec.id.0 + 1);
                reg.by_name.insert(rec.name.clone(), rec.id);
                let identity = Identity {
                    id: rec.id,
                    name: rec.name,
                    role: rec.role,
                    public_key: rec.public_key,
                    enrolled: rec.enrolled,
                };
                reg.by_id.insert(
                    rec.id,
                    Entry {
                        verifying: VerifyingKey::from_bytes(&identity.public_key.0).ok(),
                        identity,
                        credential,
                    },
                );
            }
        }
        Ok(msp)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, self.to_document())?;
        std::fs::rename(tmp, path)
    }

    pub fn load(path: &Path, access: AccessMatrix) -> Result<Self, MspError> {
        let text = std::fs::read_to_string(path).map_err(|e| MspError::Document(e.to_string()))?;
        Self::from_document(&text, access)
    }
}

fn decode_fixed<const N: usize>(s: &str) -> Result<[u8; N], MspError> {
    hex::decode(s)
        .ok()
        .and_then(|v| v.try_into().ok())
        .ok_or_else(|| MspError::Document(format!("bad hex field {s:?}")))
}
