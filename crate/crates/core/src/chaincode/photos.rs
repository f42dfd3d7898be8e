//! Photo metadata and category queries (channel E2).

use std::collections::BTreeSet;

use super::model::{CoinAmount, PhotoPublished, PhotoRecord, PriceTier, Prices};
use super::{arg_hash, arg_str, expect_args, Chaincode, ChaincodeError, TxContext};
use crate::codec::{Canonical, Decoder, Encoder, Hash256};
use crate::identity::Role;

pub struct Photos;

pub fn publish_args(
    owner: &str,
    title: &str,
    categories: &[&str],
    prices: &[(PriceTier, CoinAmount)],
    blob_ref: &Hash256,
) -> Vec<Vec<u8>> {
    let mut cats = Encoder::new();
    cats.u64(categories.len() as u64);
    for c in categories {
        cats.str(c);
    }
    vec![
        owner.as_bytes().to_vec(),
        title.as_bytes().to_vec(),
        cats.finish(),
        Prices::encode_pairs(prices),
        blob_ref.to_hex().into_bytes(),
    ]
}

pub fn list_by_category_args(category: &str) -> Vec<Vec<u8>> {
    vec![category.as_bytes().to_vec()]
}

pub fn get_photo_args(photo_id: &Hash256) -> Vec<Vec<u8>> {
    vec![photo_id.to_hex().into_bytes()]
}

pub fn decode_photo_list(response: &[u8]) -> Result<Vec<PhotoRecord>, ChaincodeError> {
    Ok(Vec::<PhotoRecord>::from_canonical(response)?)
}

pub fn decode_photo(response: &[u8]) -> Result<Option<PhotoRecord>, ChaincodeError> {
    let mut dec = Decoder::new(response);
    let p = dec.option::<PhotoRecord>()?;
    dec.finish()?;
    Ok(p)
}

impl Chaincode for Photos {
    fn name(&self) -> &'static str {
        "photos"
    }

    fn functions(&self) -> &'static [&'static str] {
        &["publish", "get_photo", "list_by_category"]
    }

    fn invoke(&self, ctx: &mut TxContext<'_>, function: &str, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
        match function {
            "publish" => publish(ctx, args),
            "get_photo" => {
                expect_args(args, 1)?;
                let id = arg_hash(args, 0)?;
                let found = ctx
                    .get_state(&PhotoRecord::key(&id))
                    .map(|raw| PhotoRecord::from_canonical(&raw))
                    .transpose()?;
                let mut enc = Encoder::new();
                enc.option(found.as_ref());
                Ok(enc.finish())
            }
            "list_by_category" => {
                expect_args(args, 1)?;
                let category = arg_str(args, 0)?;
                let photos = list_by_category(ctx, &category)?;
                Ok(photos.to_canonical())
            }
            other => Err(ChaincodeError::UnknownFunction(other.to_string())),
        }
    }
}

fn publish(ctx: &mut TxContext<'_>, args: &[Vec<u8>]) -> Result<Vec<u8>, ChaincodeError> {
    expect_args(args, 5)?;
    let owner = arg_str(args, 0)?;
    let invoker = ctx.invoker();
    if invoker.name != owner || invoker.role != Role::Photographer {
        return Err(ChaincodeError::NotOwner);
    }
    let title = arg_str(args, 1)?;
    let prices = Prices::from_pairs(&Prices::decode_pairs(&args[3])?)?;
    let mut dec = Decoder::new(&args[2]);
    let raw_cats: Vec<String> = dec.list()?;
    dec.finish()?;
    let categories: BTreeSet<String> = raw_cats
        .into_iter()
        .map(|c| c.trim().to_string())
        .filter(|c| !c.is_empty())
        .collect();
    if categories.is_empty() {
        return Err(ChaincodeError::NoCategory);
    }
    let blob_ref = arg_hash(args, 4)?;
    let key = PhotoRecord::key(&blob_ref);
    if ctx.get_state(&key).is_some() {
        return Err(ChaincodeError::PhotoExists(blob_ref.to_hex()));
    }
    let record = PhotoRecord {
        photo_id: blob_ref,
        owner: owner.clone(),
        title,
        categories,
        prices,
        blob_ref,
        published_at: ctx.timestamp(),
    };
    let bytes = record.to_canonical();
    ctx.put_state(&key, bytes.clone());
    for topic in &record.categories {
        let ev = PhotoPublished {
            photo_id: blob_ref,
            topic: topic.clone(),
            publisher: owner.clone(),
        };
        ctx.emit(PhotoPublished::EVENT, ev.to_canonical());
    }
    Ok(bytes)
}

/// Photos whose categories contain `category`, ordered by photo id. An empty
/// category selects every photo.
fn list_by_category(ctx: &mut TxContext<'_>, category: &str) -> Result<Vec<PhotoRecord>, ChaincodeError> {
    let mut out = Vec::new();
    for (_, raw) in ctx.scan_prefix("photo:") {
        let rec = PhotoRecord::from_canonical(&raw)?;
        if category.is_empty() || rec.categories.contains(category) {
            out.push(rec);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaincode::testutil::{ident, run};
    use crate::chaincode::{execute, ChaincodeRegistry, Installed};
    use crate::endorsement::EndorsementPolicy;
    use crate::ledger::{ChannelId, Version, WorldState};
    use proptest::prelude::*;
    use PriceTier::*;

    const PRICES: [(PriceTier, CoinAmount); 3] = [(Personal, 10), (Editorial, 30), (Commercial, 100)];

    fn cc() -> Installed {
        ChaincodeRegistry::platform(EndorsementPolicy::new(2))
            .for_channel(&ChannelId::photos())
            .unwrap()
            .clone()
    }

    #[test]
    fn publish_writes_record_and_one_event_per_category() {
        let alice = ident("alice", Role::Photographer);
        let blob = Hash256::digest(b"jpeg bytes");
        let args = publish_args("alice", "Fox", &["nature", "animal"], &PRICES, &blob);
        let r = execute(&cc(), "publish", &args, &WorldState::new(), &alice, Hash256::ZERO, 3).unwrap();
        assert_eq!(r.rwset.writes.len(), 1);
        let rec = PhotoRecord::from_canonical(r.rwset.writes[0].value.as_ref().unwrap()).unwrap();
        assert_eq!(rec.photo_id, blob);
        assert_eq!(rec.prices.editorial, 30);
        assert_eq!(r.events.len(), 2);
        let topics: Vec<_> = r
            .events
            .iter()
            .map(|e| PhotoPublished::from_canonical(&e.payload).unwrap().topic)
            .collect();
        assert_eq!(topics, ["animal", "nature"]);
    }

    #[test]
    fn publish_rejections() {
        let alice = ident("alice", Role::Photographer);
        let bob = ident("bob", Role::Customer);
        let blob = Hash256::digest(b"x");
        let s = WorldState::new();
        let two = publish_args("alice", "t", &["nature"], &PRICES[..2], &blob);
        assert!(matches!(
            execute(&cc(), "publish", &two, &s, &alice, Hash256::ZERO, 0),
            Err(ChaincodeError::BadPrices(_))
        ));
        let none = publish_args("alice", "t", &[], &PRICES, &blob);
        assert_eq!(
            execute(&cc(), "publish", &none, &s, &alice, Hash256::ZERO, 0),
            Err(ChaincodeError::NoCategory)
        );
        let as_bob = publish_args("bob", "t", &["nature"], &PRICES, &blob);
        assert_eq!(
            execute(&cc(), "publish", &as_bob, &s, &bob, Hash256::ZERO, 0),
            Err(ChaincodeError::NotOwner)
        );
        let for_alice = publish_args("alice", "t", &["nature"], &PRICES, &blob);
        assert_eq!(
            execute(&cc(), "publish", &for_alice, &s, &bob, Hash256::ZERO, 0),
            Err(ChaincodeError::NotOwner)
        );
    }

    #[test]
    fn duplicate_publish_rejected() {
        let alice = ident("alice", Role::Photographer);
        let blob = Hash256::digest(b"x");
        let mut s = WorldState::new();
        let args = publish_args("alice", "t", &["sport"], &PRICES, &blob);
        run(&mut s, &cc(), &alice, "publish", args.clone(), Version::new(1, 0)).unwrap();
        assert!(matches!(
            run(&mut s, &cc(), &alice, "publish", args, Version::new(2, 0)),
            Err(ChaincodeError::PhotoExists(_))
        ));
    }

    #[test]
    fn list_by_category_membership() {
        let alice = ident("alice", Role::Photographer);
        let mut s = WorldState::new();
        let fox = Hash256::digest(b"fox");
        run(
            &mut s,
            &cc(),
            &alice,
            "publish",
            publish_args("alice", "Fox", &["nature", "animal"], &PRICES, &fox),
            Version::new(1, 0),
        )
        .unwrap();
        for cat in ["nature", "animal"] {
            let r = run(&mut s, &cc(), &alice, "list_by_category", list_by_category_args(cat), Version::new(2, 0)).unwrap();
            assert_eq!(decode_photo_list(&r.response).unwrap()[0].photo_id, fox);
        }
        let r = run(&mut s, &cc(), &alice, "list_by_category", list_by_category_args("ufo"), Version::new(2, 0)).unwrap();
        assert!(decode_photo_list(&r.response).unwrap().is_empty());
        let r = run(&mut s, &cc(), &alice, "get_photo", get_photo_args(&fox), Version::new(2, 0)).unwrap();
        assert_eq!(decode_photo(&r.response).unwrap().unwrap().title, "Fox");
    }

    const TOPICS: [&str; 4] = ["nature", "sport", "human", "animal"];

    proptest! {
        // Full-scan oracle: decode every photo key and filter by membership.
        #[test]
        fn listing_equals_full_scan(photos in proptest::collection::vec(
            proptest::collection::btree_set(0usize..4, 1..4), 0..25), query in 0usize..5)
        {
            let alice = ident("alice", Role::Photographer);
            let mut s = WorldState::new();
            for (i, cats) in photos.iter().enumerate() {
                let names: Vec<&str> = cats.iter().map(|c| TOPICS[*c]).collect();
                let blob = Hash256::digest(&(i as u64).to_be_bytes());
                run(&mut s, &cc(), &alice, "publish",
                    publish_args("alice", "p", &names, &PRICES, &blob),
                    Version::new(i as u64 + 1, 0)).unwrap();
            }
            let category = TOPICS.get(query).copied().unwrap_or("");
            let r = execute(&cc(), "list_by_category", &list_by_category_args(category), &s, &alice, Hash256::ZERO, 0).unwrap();
            let got: Vec<Hash256> = decode_photo_list(&r.response).unwrap().into_iter().map(|p| p.photo_id).collect();
            let mut expected: Vec<Hash256> = s.iter()
                .filter(|(k, _)| k.starts_with("photo:"))
                .map(|(_, v)| PhotoRecord::from_canonical(&v.value).unwrap())
                .filter(|p| category.is_empty() || p.categories.iter().any(|c| c == category))
                .map(|p| p.photo_id)
                .collect();
            expected.sort();
            prop_assert_eq!(got, expected);
        }
    }
}
