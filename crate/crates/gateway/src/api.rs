//! Request and response bodies. Every body is a JSON object; errors are
//! `{code, message}`.

use std::collections::BTreeMap;

use hyperpubsub_core::chaincode::{CoinAmount, PhotoRecord, PriceTier, Prices};
use hyperpubsub_core::pubsub::{PublishEvent, Subscription};
use hyperpubsub_core::Hash256;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegisterRequest {
    pub name: String,
    pub secret: String,
    pub role: String,
    #[serde(default)]
    pub profile: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegisterResponse {
    pub name: String,
    pub role: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoginRequest {
    pub name: String,
    pub secret: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoginResponse {
    pub token: String,
    pub expires_at: u64,
    pub role: String,
    pub photos: Vec<PhotoView>,
}

/// A photo joined with its owner's public profile.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoView {
    pub photo_id: Hash256,
    pub title: String,
    pub owner: String,
    pub categories: Vec<String>,
    pub prices: Prices,
    pub published_at: u64,
    pub owner_profile: BTreeMap<String, String>,
}

impl PhotoView {
    pub fn new(rec: PhotoRecord, owner_profile: BTreeMap<String, String>) -> Self {
        PhotoView {
            photo_id: rec.photo_id,
            title: rec.title,
            owner: rec.owner,
            categories: rec.categories.into_iter().collect(),
            prices: rec.prices,
            published_at: rec.published_at,
            owner_profile,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoList {
    pub photos: Vec<PhotoView>,
}

/// Upload body; `image` is base64.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PublishRequest {
    pub title: String,
    pub categories: Vec<String>,
    pub prices: Prices,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublishResponse {
    pub photo_id: Hash256,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuyRequest {
    pub photo_id: String,
    pub tier: PriceTier,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BuyResponse {
    pub trade_id: Hash256,
    pub photo_id: Hash256,
    pub tier: PriceTier,
    pub price: CoinAmount,
    pub balance: CoinAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MintRequest {
    pub recipient: String,
    pub amount: CoinAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MintResponse {
    pub recipient: String,
    pub balance: CoinAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WalletResponse {
    pub owner: String,
    pub balance: CoinAmount,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubscribeRequest {
    pub topic: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionView {
    pub topic: String,
    pub start: u64,
    pub cursor: u64,
}

impl From<Subscription> for SubscriptionView {
    fn from(s: Subscription) -> Self {
        SubscriptionView {
            topic: s.topic.as_str().to_string(),
            start: s.start,
            cursor: s.cursor,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubscriptionList {
    pub subscriptions: Vec<SubscriptionView>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PollResponse {
    pub topic: String,
    pub events: Vec<PublishEvent>,
    pub cursor: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
}
