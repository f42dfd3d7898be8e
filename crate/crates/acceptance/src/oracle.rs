//! Reference checks computed from committed blocks alone.

use std::collections::{BTreeMap, BTreeSet, HashSet};

use hyperpubsub_core::chaincode::model::{grant_key, wallet_key, MintRecord, PriceTier, Prices, TradeRecord};
use hyperpubsub_core::codec::Canonical;
use hyperpubsub_core::ledger::{Version, WorldState};
use hyperpubsub_core::{Block, Hash256, ValidationFlag};

pub type Entries = BTreeMap<String, (Vec<u8>, Version)>;

#[derive(Debug, Default)]
pub struct Sequential {
    pub state: Entries,
    pub valid: usize,
    pub invalid: usize,
}

/// Re-derives every verdict from the read sets: a transaction may be valid
/// only if each key it read still has the version it observed after the
/// valid transactions before it, in block order. Valid writes are applied at
/// `(block, index)`.
pub fn sequential(blocks: &[Block]) -> Result<Sequential, String> {
    let mut out = Sequential::default();
    let mut seen = HashSet::new();
    for block in blocks {
        let n = block.number();
        if block.validation_flags.len() != block.transactions.len() {
            return Err(format!("block {n}: {} flags for {} txs", block.validation_flags.len(), block.transactions.len()));
        }
        for (i, (tx, flag)) in block.transactions.iter().zip(&block.validation_flags).enumerate() {
            let fresh = tx
                .rwset
                .reads
                .iter()
                .all(|r| out.state.get(&r.key).map(|(_, v)| *v) == r.version);
            match flag {
                ValidationFlag::Valid if !fresh => return Err(format!("block {n} tx {i}: valid with a stale read")),
                ValidationFlag::MvccConflict if fresh => {
                    return Err(format!("block {n} tx {i}: flagged conflicting but every read is current"))
                }
                _ => {}
            }
            if !flag.is_valid() {
                out.invalid += 1;
                continue;
            }
            if !seen.insert(tx.tx_id) {
                return Err(format!("block {n} tx {i}: transaction committed twice"));
            }
            out.valid += 1;
            let version = Version::new(n, i as u64);
            for w in &tx.rwset.writes {
                match &w.value {
                    Some(v) => out.state.insert(w.key.clone(), (v.clone(), version)),
                    None => out.state.remove(&w.key),
                };
            }
        }
    }
    Ok(out)
}

pub fn entries_of(ws: &WorldState) -> Entries {
    ws.iter().map(|(k, v)| (k.clone(), (v.value.clone(), v.version))).collect()
}

/// Writes of invalid transactions that are visible in `state`.
pub fn leaked_invalid_writes(blocks: &[Block], state: &WorldState) -> Vec<String> {
    let mut leaks = Vec::new();
    for block in blocks {
        for (i, (tx, flag)) in block.transactions.iter().zip(&block.validation_flags).enumerate() {
            if flag.is_valid() {
                continue;
            }
            let at = Version::new(block.number(), i as u64);
            for w in &tx.rwset.writes {
                if state.get(&w.key).is_some_and(|v| v.version == at) {
                    leaks.push(format!("{} from block {} tx {i}", w.key, block.number()));
                }
            }
        }
    }
    leaks
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct CoinBook {
    pub balances: BTreeMap<String, u64>,
    pub minted: u64,
    pub trades: usize,
    pub grants: BTreeSet<(String, Hash256)>,
    listings: BTreeMap<Hash256, (String, Prices)>,
}

impl CoinBook {
    pub fn balance(&self, who: &str) -> u64 {
        self.balances.get(who).copied().unwrap_or(0)
    }

    pub fn price(&self, photo: &Hash256, tier: PriceTier) -> Option<u64> {
        self.listings.get(photo).map(|(_, p)| p.get(tier))
    }

    fn total(&self) -> u128 {
        self.balances.values().map(|b| *b as u128).sum()
    }
}

fn arg(args: &[Vec<u8>], i: usize) -> Result<String, String> {
    args.get(i)
        .and_then(|a| String::from_utf8(a.clone()).ok())
        .ok_or_else(|| format!("argument {i} missing"))
}

fn wrote(tx_writes: &[hyperpubsub_core::ledger::KvWrite], key: &str, value: Option<&[u8]>) -> bool {
    tx_writes
        .iter()
        .any(|w| w.key == key && value.is_none_or(|v| w.value.as_deref() == Some(v)))
}

/// Replays the trades channel with plain arithmetic. Every valid mint adds
/// coins; every valid buy needs a balance of at least the price and must
/// write both wallet deltas, the trade record and the grant. Coin totals
/// are checked after each block.
pub fn coin_audit(blocks: &[Block]) -> Result<CoinBook, String> {
    let mut book = CoinBook::default();
    for block in blocks {
        let n = block.number();
        for (i, (tx, flag)) in block.transactions.iter().zip(&block.validation_flags).enumerate() {
            if !flag.is_valid() {
                continue;
            }
            let at = format!("block {n} tx {i}");
            let args = &tx.header.args;
            let writes = &tx.rwset.writes;
            match tx.header.function.as_str() {
                "mint" => {
                    let to = arg(args, 0)?;
                    let amount = u64::from_be_bytes(
                        args.get(1)
                            .and_then(|a| a.as_slice().try_into().ok())
                            .ok_or_else(|| format!("{at}: bad amount"))?,
                    );
                    let after = book.balance(&to) + amount;
                    if !wrote(writes, &wallet_key(&to), Some(&after.to_be_bytes())) {
                        return Err(format!("{at}: mint to {to} does not leave {after}"));
                    }
                    if !wrote(writes, &MintRecord::key(&tx.tx_id), None) {
                        return Err(format!("{at}: mint without a record"));
                    }
                    book.balances.insert(to, after);
                    book.minted += amount;
                }
                "register_listing" => {
                    let id = Hash256::from_hex(&arg(args, 0)?).map_err(|e| e.to_string())?;
                    let owner = arg(args, 1)?;
                    let prices = Prices::decode_pairs(&args[2])
                        .and_then(|p| Prices::from_pairs(&p))
                        .map_err(|e| e.to_string())?;
                    if book.listings.insert(id, (owner, prices)).is_some() {
                        return Err(format!("{at}: listing registered twice"));
                    }
                }
                "buy" => {
                    let buyer = arg(args, 0)?;
                    let id = Hash256::from_hex(&arg(args, 1)?).map_err(|e| e.to_string())?;
                    let tier: PriceTier = arg(args, 2)?.parse().map_err(|e: hyperpubsub_core::chaincode::ChaincodeError| e.to_string())?;
                    let (seller, prices) = book
                        .listings
                        .get(&id)
                        .cloned()
                        .ok_or_else(|| format!("{at}: buy of an unlisted photo"))?;
                    if seller == buyer {
                        return Err(format!("{at}: self purchase committed"));
                    }
                    let price = prices.get(tier);
                    let have = book.balance(&buyer);
                    if have < price {
                        return Err(format!("{at}: {buyer} bought at {price} holding {have}"));
                    }
                    let buyer_after = have - price;
                    let seller_after = book.balance(&seller) + price;
                    let complete = wrote(writes, &wallet_key(&buyer), Some(&buyer_after.to_be_bytes()))
                        && wrote(writes, &wallet_key(&seller), Some(&seller_after.to_be_bytes()))
                        && wrote(writes, &TradeRecord::key(&tx.tx_id), None)
                        && wrote(writes, &grant_key(&buyer, &id), None);
                    if !complete {
                        return Err(format!("{at}: trade without matching wallet deltas and grant"));
                    }
                    book.balances.insert(buyer.clone(), buyer_after);
                    book.balances.insert(seller, seller_after);
                    book.grants.insert((buyer, id));
                    book.trades += 1;
                }
                _ => {}
            }
        }
        if book.total() != book.minted as u128 {
            return Err(format!("after block {n}: wallets hold {} but {} was minted", book.total(), book.minted));
        }
    }
    Ok(book)
}

/// Applies valid writes block by block and checks the committed state
/// itself after each block: wallets sum to the mint records and every trade
/// record has its grant.
pub fn state_invariants(blocks: &[Block]) -> Result<usize, String> {
    let mut state: BTreeMap<String, Vec<u8>> = BTreeMap::new();
    let mut checked = 0;
    for block in blocks {
        for (tx, flag) in block.transactions.iter().zip(&block.validation_flags) {
            if !flag.is_valid() {
                continue;
            }
            for w in &tx.rwset.writes {
                match &w.value {
                    Some(v) => state.insert(w.key.clone(), v.clone()),
                    None => state.remove(&w.key),
                };
            }
        }
        let mut wallets: u128 = 0;
        let mut mints: u128 = 0;
        for (k, v) in &state {
            if k.starts_with("wallet:") {
                let raw: [u8; 8] = v.as_slice().try_into().map_err(|_| format!("{k} is not 8 bytes"))?;
                wallets += u64::from_be_bytes(raw) as u128;
            } else if k.starts_with("mint:") {
                mints += MintRecord::from_canonical(v).map_err(|e| e.to_string())?.amount as u128;
            } else if k.starts_with("trade:") {
                let t = TradeRecord::from_canonical(v).map_err(|e| e.to_string())?;
                if !state.contains_key(&grant_key(&t.buyer, &t.photo_id)) {
                    return Err(format!("block {}: trade {} has no grant", block.number(), t.trade_id.short()));
                }
            }
        }
        if wallets != mints {
            return Err(format!("block {}: wallets {wallets} != mints {mints}", block.number()));
        }
        checked += 1;
    }
    Ok(checked)
}
