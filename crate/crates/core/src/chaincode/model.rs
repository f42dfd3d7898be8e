//! Marketplace records stored by the platform chaincodes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::ChaincodeError;
use crate::codec::{Canonical, CodecError, Decoder, Encoder, Hash256};
use crate::identity::Role;

/// Integer coin amount; there are no fractional coins.
pub type CoinAmount = u64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PriceTier {
    Personal,
    Editorial,
    Commercial,
}

impl PriceTier {
    pub const ALL: [PriceTier; 3] = [PriceTier::Personal, PriceTier::Editorial, PriceTier::Commercial];

    pub fn as_str(self) -> &'static str {
        match self {
            PriceTier::Personal => "personal",
            PriceTier::Editorial => "editorial",
            PriceTier::Commercial => "commercial",
        }
    }
}

impl fmt::Display for PriceTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PriceTier {
    type Err = ChaincodeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PriceTier::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| ChaincodeError::InvalidArgument(format!("unknown tier {s:?}")))
    }
}

/// One positive price per copyright tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prices {
    pub personal: CoinAmount,
    pub editorial: CoinAmount,
    pub commercial: CoinAmount,
}

impl Prices {
    /// Builds prices from (tier, amount) pairs: exactly the three tiers,
    /// each once, each positive.
    pub fn from_pairs(pairs: &[(PriceTier, CoinAmount)]) -> Result<Self, ChaincodeError> {
        if pairs.len() != 3 {
            return Err(ChaincodeError::BadPrices(format!("expected 3 prices, got {}", pairs.len())));
        }
        let map: BTreeMap<PriceTier, CoinAmount> = pairs.iter().copied().collect();
        if map.len() != 3 {
            return Err(ChaincodeError::BadPrices("duplicate tier".into()));
        }
        if map.values().any(|p| *p == 0) {
            return Err(ChaincodeError::BadPrices("prices must be positive".into()));
        }
        Ok(Prices {
            personal: map[&PriceTier::Personal],
            editorial: map[&PriceTier::Editorial],
            commercial: map[&PriceTier::Commercial],
        })
    }

    pub fn get(&self, tier: PriceTier) -> CoinAmount {
        match tier {
            PriceTier::Personal => self.personal,
            PriceTier::Editorial => self.editorial,
            PriceTier::Commercial => self.commercial,
        }
    }

    pub fn pairs(&self) -> [(PriceTier, CoinAmount); 3] {
        PriceTier::ALL.map(|t| (t, self.get(t)))
    }

    /// Wire form used as a chaincode argument: list of (tier, amount).
    pub fn encode_pairs(pairs: &[(PriceTier, CoinAmount)]) -> Vec<u8> {
        let mut enc = Encoder::new();
        enc.u64(pairs.len() as u64);
        for (t, p) in pairs {
            enc.str(t.as_str()).u64(*p);
        }
        enc.finish()
    }

    pub fn decode_pairs(raw: &[u8]) -> Result<Vec<(PriceTier, CoinAmount)>, ChaincodeError> {
        let mut dec = Decoder::new(raw);
        let n = dec.u64()?;
        let mut out = Vec::new();
        for _ in 0..n.min(16) {
            let tier: PriceTier = dec.string()?.parse()?;
            out.push((tier, dec.u64()?));
        }
        if n > 16 {
            return Err(ChaincodeError::BadPrices(format!("expected 3 prices, got {n}")));
        }
        dec.finish()?;
        Ok(out)
    }
}

impl Canonical for Prices {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.u64(self.personal).u64(self.editorial).u64(self.commercial);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Prices {
            personal: dec.u64()?,
            editorial: dec.u64()?,
            commercial: dec.u64()?,
        })
    }
}

fn encode_strings<'a>(enc: &mut Encoder, items: impl ExactSizeIterator<Item = &'a String>) {
    enc.u64(items.len() as u64);
    for s in items {
        enc.str(s);
    }
}

/// Client account stored under `acct:<name>` in E1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Account {
    pub name: String,
    pub role: Role,
    pub profile: BTreeMap<String, String>,
    pub registered_at: u64,
}

impl Account {
    pub fn key(name: &str) -> String {
        format!("acct:{name}")
    }
}

impl Canonical for Account {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.str(&self.name).value(&self.role).u64(self.profile.len() as u64);
        for (k, v) in &self.profile {
            enc.str(k).str(v);
        }
        enc.u64(self.registered_at);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        let name = dec.string()?;
        let role = dec.value()?;
        let profile: Vec<(String, String)> = dec.list()?;
        Ok(Account {
            name,
            role,
            profile: profile.into_iter().collect(),
            registered_at: dec.u64()?,
        })
    }
}

/// Photo metadata stored under `photo:<id>` in E2. The id is the content
/// hash of the image bytes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoRecord {
    pub photo_id: Hash256,
    pub owner: String,
    pub title: String,
    pub categories: BTreeSet<String>,
    pub prices: Prices,
    pub blob_ref: Hash256,
    pub published_at: u64,
}

impl PhotoRecord {
    pub fn key(photo_id: &Hash256) -> String {
        format!("photo:{}", photo_id.to_hex())
    }
}

impl Canonical for PhotoRecord {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.photo_id).str(&self.owner).str(&self.title);
        encode_strings(enc, self.categories.iter());
        enc.value(&self.prices).value(&self.blob_ref).u64(self.published_at);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(PhotoRecord {
            photo_id: dec.value()?,
            owner: dec.string()?,
            title: dec.string()?,
            categories: dec.list::<String>()?.into_iter().collect(),
            prices: dec.value()?,
            blob_ref: dec.value()?,
            published_at: dec.u64()?,
        })
    }
}

/// Mirror of (photo, owner, prices) kept in E3 so purchases stay inside one
/// channel. Stored under `listing:<id>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Listing {
    pub photo_id: Hash256,
    pub owner: String,
    pub prices: Prices,
}

impl Listing {
    pub fn key(photo_id: &Hash256) -> String {
        format!("listing:{}", photo_id.to_hex())
    }
}

impl Canonical for Listing {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.photo_id).str(&self.owner).value(&self.prices);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(Listing {
            photo_id: dec.value()?,
            owner: dec.string()?,
            prices: dec.value()?,
        })
    }
}

/// Purchase record under `trade:<trade_id>`; the trade id is the id of the
/// buying transaction, so its block position is found through the chain.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub trade_id: Hash256,
    pub buyer: String,
    pub seller: String,
    pub photo_id: Hash256,
    pub tier: PriceTier,
    pub price: CoinAmount,
    pub executed_at: u64,
}

impl TradeRecord {
    pub fn key(trade_id: &Hash256) -> String {
        format!("trade:{}", trade_id.to_hex())
    }
}

impl Canonical for TradeRecord {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.trade_id)
            .str(&self.buyer)
            .str(&self.seller)
            .value(&self.photo_id)
            .str(self.tier.as_str())
            .u64(self.price)
            .u64(self.executed_at);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(TradeRecord {
            trade_id: dec.value()?,
            buyer: dec.string()?,
            seller: dec.string()?,
            photo_id: dec.value()?,
            tier: dec
                .string()?
                .parse()
                .map_err(|e: ChaincodeError| CodecError::Invalid(e.to_string()))?,
            price: dec.u64()?,
            executed_at: dec.u64()?,
        })
    }
}

/// Coin creation record under `mint:<mint_id>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MintRecord {
    pub mint_id: Hash256,
    pub admin: String,
    pub recipient: String,
    pub amount: CoinAmount,
}

impl MintRecord {
    pub fn key(mint_id: &Hash256) -> String {
        format!("mint:{}", mint_id.to_hex())
    }
}

impl Canonical for MintRecord {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.mint_id)
            .str(&self.admin)
            .str(&self.recipient)
            .u64(self.amount);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(MintRecord {
            mint_id: dec.value()?,
            admin: dec.string()?,
            recipient: dec.string()?,
            amount: dec.u64()?,
        })
    }
}

pub fn wallet_key(owner: &str) -> String {
    format!("wallet:{owner}")
}

pub fn grant_key(buyer: &str, photo_id: &Hash256) -> String {
    format!("grant:{buyer}:{}", photo_id.to_hex())
}

pub fn config_key(key: &str) -> String {
    format!("cfg:{key}")
}

/// Payload of the `publish` chaincode event, one per category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhotoPublished {
    pub photo_id: Hash256,
    pub topic: String,
    pub publisher: String,
}

impl PhotoPublished {
    pub const EVENT: &'static str = "publish";
}

impl Canonical for PhotoPublished {
    fn encode_to(&self, enc: &mut Encoder) {
        enc.value(&self.photo_id).str(&self.topic).str(&self.publisher);
    }
    fn decode_from(dec: &mut Decoder<'_>) -> Result<Self, CodecError> {
        Ok(PhotoPublished {
            photo_id: dec.value()?,
            topic: dec.string()?,
            publisher: dec.string()?,
        })
    }
}
