//! Wallets, listings, purchases and download grants (channel E3).
//!
//! A purchase is one transaction whose write set moves coins between the two
//! wallets and records both the trade and the buyer's download grant, so
//! either all of it commits or none of it does.

use super::model::{grant_key, wallet_key, CoinAmount, Listing, MintRecord, PriceTier, Prices, TradeRecord};
use super::{arg_hash, arg_str, arg_u64, expect_args, Chaincode, ChaincodeError, TxContext};
use crate::codec::{Canonical, Hash256};
use crate::identity::Role;

pub struct Trades;

pub fn mint_args(recipient: &str, amount: CoinAmount) -> Vec<Vec<u8>> {
    vec![recipient.as_bytes().to_vec(), amount.to_be_bytes().to_vec()]
}

pub fn register_listing_args(photo_id: &Hash256, owner: &str, prices: &Prices) -> Vec<Vec<u8>> {
    vec![
        photo_id.to_hex().into_bytes(),
        owner.as_bytes().to_vec(),
        Prices::encode_pairs(&prices.pairs()),
    ]
}

pub fn buy_args(buyer: &str, photo_id: &Hash256, tier: PriceTier) -> Vec<Vec<u8>> {
    vec![
        buyer.as_bytes().to_vec(),
        photo_id.to_hex().into_bytes(),
        tier.as_str().as_bytes().to_vec(),
    ]
}

pub fn balance_args(owner: &str) -> Vec<Vec<u8>> {
    vec![owner.as_bytes().to_vec()]
}

pub fn has_grant_args(buyer: &str, photo_id: &Hash256) -> Vec<Vec<u8>> {
    vec![buyer.as_bytes().to_vec(), photo_id.to_hex().into_bytes()]
}

pub fn get_listing_args(photo_id: &Hash256) -> Vec<Vec<u8>> {
    vec![photo_id.to_hex().into_bytes()]
}

pub fn decode_balance(response: &[u8]) -> Result<CoinAmount, ChaincodeError> {
    decode_amount(response)
}

pub fn decode_amount(raw: &[u8]) -> Result<CoinAmount, ChaincodeError> {
    let arr: [u8; 8] = raw
        .try_into()
        .map_err(|_| ChaincodeError::Corrupt("coin amount is not 8 bytes".into()))?;
    Ok(u64::from_be_bytes(arr))
}

fn read_balance(ctx: &mut TxContext<'_>, owner: &str) -> Result<CoinAmount, ChaincodeError> {
    match ctx.get_state(&wallet_key(owner)) {
        None => Ok(0),
        Some(raw) => decode_amount(&raw),
    }
}

impl Chaincode for Trades {
    fn name(&self) -> &'static str {
        "trades"
    }

    fn functions(&self) -> &'static [&'static str] {
        &["mint", "register_listing", "buy", "balance", "get_listing", "has_grant"]
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        match function {
            "mint" => mint(ctx, args),
            "register_listing" => register_listing(ctx, args),
            "buy" => buy(ctx, args),
            "balance" => {
                expect_args(args, 1)?;
                let owner = arg_str(args, 0)?;
                Ok(read_balance(ctx, &owner)?.to_be_bytes().to_vec())
            }
            "get_listing" => {
                expect_args(args, 1)?;
                let id = arg_hash(args, 0)?;
                let mut enc = crate::codec::Encoder::new();
                let listing = ctx
                    .get_state(&Listing::key(&id))
                    .map(|raw| Listing::from_canonical(&raw))
                    .transpose()?;
                enc.option(listing.as_ref());
                Ok(enc.finish())
            }
            "has_grant" => {
                expect_args(args, 2)?;
                let buyer = arg_str(args, 0)?;
                let id = arg_hash(args, 1)?;
                let granted = ctx.get_state(&grant_key(&buyer, &id)).is_some();
                Ok(vec![granted as u8])
            }
            other => Err(ChaincodeError::UnknownFunction(other.to_string())),
        }
    }
}

fn mint(ctx: &mut TxContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
    expect_args(args, 2)?;
    if ctx.invoker().role != Role::Admin {
        return Err(ChaincodeError::NotAdmin);
    }
    let recipient = arg_str(args, 0)?;
    let amount = arg_u64(args, 1)?;
    if amount == 0 {
        return Err(ChaincodeError::BadAmount);
    }
    if recipient.is_empty() {
        return Err(ChaincodeError::InvalidArgument("empty recipient".into()));
    }
    let balance = read_balance(ctx, &recipient)?
        .checked_add(amount)
        .ok_or(ChaincodeError::Overflow)?;
    ctx.put_state(&wallet_key(&recipient), balance.to_be_bytes().to_vec());
    let record = MintRecord {
        mint_id: ctx.tx_id(),
        admin: ctx.invoker().name.clone(),
        recipient,
        amount,
    };
    ctx.put_state(&MintRecord::key(&record.mint_id), record.to_canonical());
    Ok(balance.to_be_bytes().to_vec())
}

fn register_listing(ctx: &mut TxContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
    expect_args(args, 3)?;
    if ctx.invoker().role != Role::Admin {
        return Err(ChaincodeError::NotAdmin);
    }
    let photo_id = arg_hash(args, 0)?;
    let owner = arg_str(args, 1)?;
    let prices = Prices::from_pairs(&Prices::decode_pairs(&args[2])?)?;
    let key = Listing::key(&photo_id);
    if ctx.get_state(&key).is_some() {
        return Err(ChaincodeError::ListingExists(photo_id.to_hex()));
    }
    let listing = Listing {
        photo_id,
        owner,
        prices,
    };
    ctx.put_state(&key, listing.to_canonical());
    Ok(Vec::new())
}

fn buy(ctx: &mut TxContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
    expect_args(args, 3)?;
    let buyer = arg_str(args, 0)?;
    if ctx.invoker().name != buyer {
        return Err(ChaincodeError::NotOwner);
    }
    let photo_id = arg_hash(args, 1)?;
    let tier: PriceTier = arg_str(args, 2)?.parse()?;
    let listing = match ctx.get_state(&Listing::key(&photo_id)) {
        Some(raw) => Listing::from_canonical(&raw)?,
        None => return Err(ChaincodeError::UnknownPhoto(photo_id.to_hex())),
    };
    if listing.owner == buyer {
        return Err(ChaincodeError::SelfPurchase);
    }
    let price = listing.prices.get(tier);
    let buyer_balance = read_balance(ctx, &buyer)?;
    // A buyer needs at least the price; equality is enough.
    if buyer_balance < price {
        return Err(ChaincodeError::InsufficientFunds {
            balance: buyer_balance,
            price,
        });
    }
    let seller_balance = read_balance(ctx, &listing.owner)?
        .checked_add(price)
        .ok_or(ChaincodeError::Overflow)?;
    ctx.put_state(&wallet_key(&buyer), (buyer_balance - price).to_be_bytes().to_vec());
    ctx.put_state(&wallet_key(&listing.owner), seller_balance.to_be_bytes().to_vec());
    let trade = TradeRecord {
        trade_id: ctx.tx_id(),
        buyer: buyer.clone(),
        seller: listing.owner,
        photo_id,
        tier,
        price,
        executed_at: ctx.timestamp(),
    };
    ctx.put_state(&TradeRecord::key(&trade.trade_id), trade.to_canonical());
    ctx.put_state(&grant_key(&buyer, &photo_id), trade.trade_id.0.to_vec());
    Ok(trade.to_canonical())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincode::testutil::{ident, run};
    use crate::chaincode::{execute, ChaincodeRegistry, Installed};
    use crate::endorsement::EndorsementPolicy;
    use crate::identity::Identity;
    use crate::ledger::{ChannelId, Version, WorldState};
    use PriceTier::*;

    fn cc() -> Installed {
        ChaincodeRegistry::platform(EndorsementPolicy::new(2))
            .for_channel(&ChannelId::trades())
            .unwrap()
            .clone()
    }

    fn prices() -> Prices {
        Prices::from_pairs(&[(Personal, 10), (Editorial, 30), (Commercial, 100)]).unwrap()
    }

    struct World {
        s: WorldState,
        block: u64,
        admin: Identity,
    }

    impl World {
        fn new() -> Self {
            World {
                s: WorldState::new(),
                block: 0,
                admin: ident("admin0", Role::Admin),
            }
        }
        fn call(&mut self, who: &Identity, f: &str, args: Vec<Vec<u8>>) -> Result<Vec<u8>, ChaincodeError> {
            self.block += 1;
            run(&mut self.s, &cc(), who, f, args, Version::new(self.block, 0)).map(|r| r.response)
        }
        fn balance(&mut self, name: &str) -> CoinAmount {
            let admin = self.admin.clone();
            decode_balance(&self.call(&admin, "balance", balance_args(name)).unwrap()).unwrap()
        }
    }

    fn listed_world() -> (World, Hash256) {
        let mut w = World::new();
        let admin = w.admin.clone();
        let photo = Hash256::digest(b"fox");
        w.call(&admin, "register_listing", register_listing_args(&photo, "alice", &prices()))
            .unwrap();
        (w, photo)
    }

    #[test]
    fn mint_paths() {
        let mut w = World::new();
        let admin = w.admin.clone();
        w.call(&admin, "mint", mint_args("bob", 100)).unwrap();
        assert_eq!(w.balance("bob"), 100);
        let alice = ident("alice", Role::Photographer);
        assert_eq!(w.call(&alice, "mint", mint_args("alice", 5)), Err(ChaincodeError::NotAdmin));
        assert_eq!(w.call(&admin, "mint", mint_args("bob", 0)), Err(ChaincodeError::BadAmount));
    }

    #[test]
    fn listing_mirror_and_duplicate() {
        let (mut w, photo) = listed_world();
        let admin = w.admin.clone();
        assert!(matches!(
            w.call(&admin, "register_listing", register_listing_args(&photo, "alice", &prices())),
            Err(ChaincodeError::ListingExists(_))
        ));
    }

    #[test]
    fn funded_purchase_moves_coins_atomically() {
        let (mut w, photo) = listed_world();
        let admin = w.admin.clone();
        let bob = ident("bob", Role::Customer);
        w.call(&admin, "mint", mint_args("bob", 100)).unwrap();
        let raw = w.call(&bob, "buy", buy_args("bob", &photo, Editorial)).unwrap();
        let trade = TradeRecord::from_canonical(&raw).unwrap();
        assert_eq!(trade.price, 30);
        assert_eq!(w.balance("bob"), 70);
        assert_eq!(w.balance("alice"), 30);
        assert!(w.s.get(&grant_key("bob", &photo)).is_some());
        assert!(w.s.get(&TradeRecord::key(&trade.trade_id)).is_some());
    }

    #[test]
    fn exact_balance_is_enough() {
        let (mut w, photo) = listed_world();
        let admin = w.admin.clone();
        let bob = ident("bob", Role::Customer);
        w.call(&admin, "mint", mint_args("bob", 30)).unwrap();
        w.call(&bob, "buy", buy_args("bob", &photo, Editorial)).unwrap();
        assert_eq!(w.balance("bob"), 0);
    }

    #[test]
    fn purchase_rejections() {
        let (mut w, photo) = listed_world();
        let admin = w.admin.clone();
        let bob = ident("bob", Role::Customer);
        w.call(&admin, "mint", mint_args("bob", 20)).unwrap();
        assert_eq!(
            w.call(&bob, "buy", buy_args("bob", &photo, Editorial)),
            Err(ChaincodeError::InsufficientFunds { balance: 20, price: 30 })
        );
        let missing = Hash256::digest(b"nope");
        assert!(matches!(
            w.call(&bob, "buy", buy_args("bob", &missing, Personal)),
            Err(ChaincodeError::UnknownPhoto(_))
        ));
        let alice = ident("alice", Role::Photographer);
        assert_eq!(
            w.call(&alice, "buy", buy_args("alice", &photo, Personal)),
            Err(ChaincodeError::SelfPurchase)
        );
        assert_eq!(w.call(&bob, "buy", buy_args("carol", &photo, Personal)), Err(ChaincodeError::NotOwner));
        assert_eq!(w.balance("bob"), 20);
    }

    #[test]
    fn repeated_execution_is_byte_identical() {
        let (mut w, photo) = listed_world();
        let admin = w.admin.clone();
        w.call(&admin, "mint", mint_args("bob", 100)).unwrap();
        let bob = ident("bob", Role::Customer);
        let args = buy_args("bob", &photo, Commercial);
        let results: Vec<_> = (0..6)
            .map(|_| execute(&cc(), "buy", &args, &w.s, &bob, Hash256::digest(b"tx"), 9).unwrap())
            .collect();
        assert!(results.windows(2).all(|p| p[0] == p[1]));
    }
}
