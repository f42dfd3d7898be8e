//! Topic subscriptions over photo categories with pull delivery.
//!
//! The photos channel is the event log. A subscription is only a topic and a
//! cursor (the number of photos-channel blocks already seen); polling reads
//! the blocks past the cursor and keeps the publish events of valid
//! transactions whose topic matches.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaincode::PhotoPublished;
use crate::codec::{Canonical, Hash256};
use crate::identity::{AccessMode, Identity, IdentityId, Msp};
use crate::ledger::{Block, ChannelLedger};

#[derive(Debug, Error)]
pub enum PubSubError {
    #[error("access denied: {0}")]
    AccessDenied(String),
    #[error("unknown topic {0:?}")]
    UnknownTopic(String),
    #[error("topic must not be empty")]
    EmptyTopic,
    #[error("no subscription to {0:?}")]
    NotSubscribed(String),
    #[error("subscription store: {0}")]
    Store(String),
}

/// A category name used as a subscription topic.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Topic(String);

impl Topic {
    pub fn new(name: impl Into<String>) -> Result<Self, PubSubError> {
        let name = name.into();
        if name.trim().is_empty() {
            return Err(PubSubError::EmptyTopic);
        }
        Ok(Topic(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Topic {
    type Error = PubSubError;
    fn try_from(s: String) -> Result<Self, PubSubError> {
        Topic::new(s)
    }
}

impl From<Topic> for String {
    fn from(t: Topic) -> String {
        t.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishEvent {
    pub photo_id: Hash256,
    pub topic: String,
    pub block: u64,
    pub tx_index: u64,
    pub publisher: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subscription {
    pub subscriber: IdentityId,
    pub topic: Topic,
    /// Photos-channel height at subscription time.
    pub start: u64,
    /// Number of photos-channel blocks already delivered.
    pub cursor: u64,
}

/// Publish events of the valid transactions in `block`, in chain order.
pub fn block_events(block: &Block) -> Vec<PublishEvent> {
    let mut out = Vec::new();
    for (i, (tx, flag)) in block.transactions.iter().zip(&block.validation_flags).enumerate() {
        if !flag.is_valid() {
            continue;
        }
        for ev in &tx.events {
            if ev.name != PhotoPublished::EVENT {
                continue;
            }
            if let Ok(p) = PhotoPublished::from_canonical(&ev.payload) {
                out.push(PublishEvent {
                    photo_id: p.photo_id,
                    topic: p.topic,
                    block: block.number(),
                    tx_index: i as u64,
                    publisher: p.publisher,
                });
            }
        }
    }
    out
}

pub fn matches(event: &PublishEvent, sub: &Subscription) -> bool {
    event.topic == sub.topic.as_str()
}

/// Matching events in blocks `[from, to)`.
pub fn events_in_range(blocks: &[Block], from: u64, to: u64, topic: &Topic) -> Vec<PublishEvent> {
    let to = to.min(blocks.len() as u64);
    if from >= to {
        return Vec::new();
    }
    blocks[from as usize..to as usize]
        .iter()
        .flat_map(block_events)
        .filter(|e| e.topic == topic.as_str())
        .collect()
}

/// Parses the newline-separated category whitelist kept in the admin channel.
pub fn parse_whitelist(raw: &[u8]) -> BTreeSet<String> {
    String::from_utf8_lossy(raw)
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

type SubKey = (IdentityId, Topic);

/// Gateway-side subscription registry, optionally persisted as JSON.
#[derive(Debug, Default)]
pub struct SubscriptionBook {
    subs: RwLock<BTreeMap<SubKey, Arc<Mutex<Subscription>>>>,
    path: Option<PathBuf>,
}

impl SubscriptionBook {
    pub fn new() -> Self {
        Self::default()
    }

    /// Loads the book from `path` if it exists; later changes are written
    /// back there.
    pub fn open(path: &Path) -> Result<Self, PubSubError> {
        let mut book = SubscriptionBook {
            subs: RwLock::default(),
            path: Some(path.to_path_buf()),
        };
        if path.exists() {
            let text = std::fs::read_to_string(path).map_err(|e| PubSubError::Store(e.to_string()))?;
            let list: Vec<Subscription> =
                serde_json::from_str(&text).map_err(|e| PubSubError::Store(e.to_string()))?;
            book.subs = RwLock::new(
                list.into_iter()
                    .map(|s| ((s.subscriber, s.topic.clone()), Arc::new(Mutex::new(s))))
                    .collect(),
            );
        }
        Ok(book)
    }

    fn persist(&self) -> Result<(), PubSubError> {
        let Some(path) = &self.path else {
            return Ok(());
        };
        let list: Vec<Subscription> = self.subs.read().values().map(|s| s.lock().clone()).collect();
        let text = serde_json::to_string_pretty(&list).map_err(|e| PubSubError::Store(e.to_string()))?;
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, text)
            .and_then(|_| std::fs::rename(&tmp, path))
            .map_err(|e| PubSubError::Store(e.to_string()))
    }

    /// Subscribes `identity` to `topic` starting at the current photos
    /// height. Subscribing twice returns the existing subscription.
    pub fn subscribe(
        &self,
        msp: &Msp,
        identity: &Identity,
        topic: &str,
        photos: &ChannelLedger,
        whitelist: Option<&BTreeSet<String>>,
    ) -> Result<Subscription, PubSubError> {
        if !msp.check_channel_access(identity, photos.channel(), AccessMode::Read) {
            return Err(PubSubError::AccessDenied(format!(
                "{} may not read {}",
                identity.name,
                photos.channel()
            )));
        }
        let topic = Topic::new(topic)?;
        if let Some(w) = whitelist {
            if !w.contains(topic.as_str()) {
                return Err(PubSubError::UnknownTopic(topic.0));
            }
        }
        let key = (identity.id, topic.clone());
        let sub = {
            let mut subs = self.subs.write();
            if let Some(existing) = subs.get(&key) {
                return Ok(existing.lock().clone());
            }
            let height = photos.height();
            let sub = Subscription {
                subscriber: identity.id,
                topic,
                start: height,
                cursor: height,
            };
            subs.insert(key, Arc::new(Mutex::new(sub.clone())));
            sub
        };
        self.persist()?;
        Ok(sub)
    }

    pub fn get(&self, subscriber: IdentityId, topic: &str) -> Option<Subscription> {
        let topic = Topic::new(topic).ok()?;
        self.subs.read().get(&(subscriber, topic)).map(|s| s.lock().clone())
    }

    pub fn list(&self, subscriber: IdentityId) -> Vec<Subscription> {
        self.subs
            .read()
            .iter()
            .filter(|((id, _), _)| *id == subscriber)
            .map(|(_, s)| s.lock().clone())
            .collect()
    }

    /// Returns the matching events past the cursor and advances it to the
    /// current height. An explicit `cursor` re-reads from that point (never
    /// before the subscription's start).
    pub fn poll(
        &self,
        subscriber: IdentityId,
        topic: &str,
        photos: &ChannelLedger,
        cursor: Option<u64>,
    ) -> Result<(Vec<PublishEvent>, Subscription), PubSubError> {
        let topic_key = Topic::new(topic)?;
        let entry = self
            .subs
            .read()
            .get(&(subscriber, topic_key.clone()))
            .cloned()
            .ok_or_else(|| PubSubError::NotSubscribed(topic.to_string()))?;
        let result = {
            let mut sub = entry.lock();
            let from = cursor.unwrap_or(sub.cursor).max(sub.start);
            let view = photos.view();
            let height = view.height();
            let events = events_in_range(view.blocks(), from, height, &topic_key);
            sub.cursor = sub.cursor.max(height);
            (events, sub.clone())
        };
        self.persist()?;
        Ok(result)
    }
}
