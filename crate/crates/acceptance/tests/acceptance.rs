//! One line per acceptance criterion. Run alone with
//! `cargo test -p hyperpubsub-acceptance --test acceptance`, optionally
//! followed by `-- 2 5` to pick criteria.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::error::Error;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::{Arc, OnceLock};
use std::time::{Duration, Instant};

use base64::Engine;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use hyperpubsub_acceptance::driver::{Call, Driver, Outcome};
use hyperpubsub_acceptance::oracle;
use hyperpubsub_core::chaincode::admin::put_config_args;
use hyperpubsub_core::chaincode::clients::create_account_args;
use hyperpubsub_core::chaincode::model::{wallet_key, PriceTier, Prices};
use hyperpubsub_core::chaincode::photos::publish_args;
use hyperpubsub_core::chaincode::trades::{buy_args, mint_args, register_listing_args};
use hyperpubsub_core::chaincode::ChaincodeError;
use hyperpubsub_core::codec::Canonical;
use hyperpubsub_core::ledger::verify_blocks;
use hyperpubsub_core::ordering::NodeAddr;
use hyperpubsub_core::pubsub::SubscriptionBook;
use hyperpubsub_core::{Block, ChannelId, Client, Hash256, Network, NetworkConfig, Role, Transaction};
use hyperpubsub_gateway::api::*;
use hyperpubsub_gateway::{serve, Gateway, GatewayConfig, Upload};

type Res = Result<String, Box<dyn Error>>;

const TOPICS: [&str; 4] = ["nature", "sport", "city", "people"];

fn prices(rng: &mut ChaCha8Rng, max: u64) -> Prices {
    let a = rng.gen_range(1..=max);
    let b = rng.gen_range(a..=max * 2);
    Prices {
        personal: a,
        editorial: b,
        commercial: rng.gen_range(b..=max * 4),
    }
}

fn tier(rng: &mut ChaCha8Rng) -> PriceTier {
    *PriceTier::ALL.choose(rng).unwrap()
}

fn topics(rng: &mut ChaCha8Rng) -> Vec<&'static str> {
    let n = rng.gen_range(1..=TOPICS.len());
    let mut t: Vec<&str> = TOPICS.choose_multiple(rng, n).copied().collect();
    t.sort();
    t
}

fn publish_call(owner: &Client, title: &str, cats: &[&str], p: &Prices, photo: &Hash256) -> Call {
    Call::new(
        owner,
        ChannelId::photos(),
        "publish",
        publish_args(&owner.identity.name, title, cats, &p.pairs(), photo),
    )
}

fn chain(net: &Network, peer: usize, ch: &ChannelId) -> Vec<Block> {
    net.peers()[peer].ledger(ch).expect("hosted").view().blocks().to_vec()
}

fn hashes(blocks: &[Block]) -> Vec<Hash256> {
    blocks.iter().map(Block::hash).collect()
}

fn committed(outcomes: &[Outcome]) -> usize {
    outcomes.iter().filter(|o| o.is_ok()).count()
}

// 1. Chain integrity

fn chain_integrity() -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut d = Driver::new(NetworkConfig::default().with_seed(101))?;
    let admin = d.admin.clone();
    let photographers: Vec<Client> = (0..5).map(|i| d.client(&format!("ph{i}"), Role::Photographer)).collect();
    let customers: Vec<Client> = (0..20).map(|i| d.client(&format!("cu{i}"), Role::Customer)).collect();
    let mut listed: Vec<Hash256> = Vec::new();
    let mut per_channel: BTreeMap<String, usize> = BTreeMap::new();
    let (mut total, mut users, mut photos) = (0usize, 0usize, 0usize);
    while total < 1000 {
        let mut calls = Vec::new();
        for _ in 0..25 {
            let roll = rng.gen_range(0..100);
            let call = if roll < 12 {
                users += 1;
                let role = if users % 3 == 0 { Role::Photographer } else { Role::Customer };
                let c = d.client(&format!("user{users}"), role);
                let profile = BTreeMap::from([("bio".to_string(), format!("user {users}"))]);
                Call::new(&c, ChannelId::clients(), "create_account", create_account_args(&c.identity.name, role, &profile))
            } else if roll < 30 {
                photos += 1;
                let owner = photographers.choose(&mut rng).unwrap();
                let id = Hash256::digest(format!("image {photos}").as_bytes());
                let p = prices(&mut rng, 20);
                calls.push(Call::new(
                    &admin,
                    ChannelId::trades(),
                    "register_listing",
                    register_listing_args(&id, &owner.identity.name, &p),
                ));
                listed.push(id);
                publish_call(owner, &format!("photo {photos}"), &topics(&mut rng), &p, &id)
            } else if roll < 55 {
                let to = customers.choose(&mut rng).unwrap();
                Call::new(&admin, ChannelId::trades(), "mint", mint_args(&to.identity.name, rng.gen_range(1..=100)))
            } else if roll < 85 && !listed.is_empty() {
                let buyer = customers.choose(&mut rng).unwrap();
                let photo = listed.choose(&mut rng).unwrap();
                Call::new(buyer, ChannelId::trades(), "buy", buy_args(&buyer.identity.name, photo, tier(&mut rng)))
            } else {
                let key = format!("k{}", rng.gen_range(0..5));
                Call::new(&admin, ChannelId::admin(), "put_config", put_config_args(&key, &rng.gen::<[u8; 8]>()))
            };
            calls.push(call);
        }
        let channels: Vec<String> = calls.iter().map(|c| c.channel.to_string()).collect();
        for (o, ch) in d.batch(calls).iter().zip(channels) {
            if o.is_ok() {
                total += 1;
                *per_channel.entry(ch).or_default() += 1;
            }
        }
    }
    if !d.net.settle(20_000) {
        return Err("peers did not converge".into());
    }
    let mut blocks = 0;
    for ch in d.net.channels().to_vec() {
        let reference = hashes(&chain(&d.net, 0, &ch));
        for peer in d.net.peers() {
            let ledger = peer.ledger(&ch).unwrap();
            let view = ledger.view();
            verify_blocks(&ch, view.blocks()).map_err(|e| format!("peer{} {ch}: {e}", peer.index()))?;
            let replayed = ledger.replay()?;
            if replayed.to_canonical() != view.state().to_canonical() {
                return Err(format!("peer{} {ch}: replay differs from live state", peer.index()).into());
            }
            if hashes(view.blocks()) != reference {
                return Err(format!("peer{} {ch}: chain differs from peer0", peer.index()).into());
            }
        }
        blocks += reference.len();
    }
    if per_channel.len() != 4 {
        return Err(format!("only {} channels saw traffic", per_channel.len()).into());
    }
    let spread: Vec<String> = per_channel.iter().map(|(c, n)| format!("{c}={n}")).collect();
    Ok(format!(
        "{total} txs ({}) in {blocks} blocks, linkage and replay verified on 6 peers x 4 channels",
        spread.join(" ")
    ))
}

// 2 and 4. Conflict workloads

#[derive(Default)]
struct ConflictRun {
    workloads: usize,
    txs: usize,
    valid: usize,
    invalid: usize,
    retained: usize,
    ghost_topics: usize,
    polled_events: usize,
    errors: Vec<String>,
    invisible_errors: Vec<String>,
}

/// Hot keys everywhere: a few wallets, a few listings, a few config keys,
/// and pairs of publishes racing for the same photo id.
fn conflict_workload(seed: u64, run: &mut ConflictRun) -> Result<(), Box<dyn Error>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut d = Driver::new(NetworkConfig::default().with_seed(seed))?;
    let admin = d.admin.clone();
    let phs: Vec<Client> = (0..2).map(|i| d.client(&format!("ph{i}"), Role::Photographer)).collect();
    let cus: Vec<Client> = (0..4).map(|i| d.client(&format!("cu{i}"), Role::Customer)).collect();
    let reader = d.client("reader", Role::Customer);
    let book = SubscriptionBook::new();
    let budget = rng.gen_range(80..=200usize);
    let mut sent = 0usize;
    let mut listed = Vec::new();
    let mut ghosts: Vec<(String, Hash256)> = Vec::new();
    let mut winners: HashMap<String, bool> = HashMap::new();
    let mut invalid_outcomes = Vec::new();

    let mut setup = Vec::new();
    for c in &cus {
        setup.push(Call::new(&admin, ChannelId::trades(), "mint", mint_args(&c.identity.name, rng.gen_range(20..=80))));
    }
    for i in 0..3 {
        let id = Hash256::digest(format!("{seed} listing {i}").as_bytes());
        let owner = phs.choose(&mut rng).unwrap();
        setup.push(Call::new(
            &admin,
            ChannelId::trades(),
            "register_listing",
            register_listing_args(&id, &owner.identity.name, &prices(&mut rng, 15)),
        ));
        listed.push(id);
    }
    sent += setup.len();
    run.txs += committed(&d.batch(setup));
    let mut round = 0;
    while sent < budget {
        round += 1;
        let size = rng.gen_range(5..=20).min(budget - sent);
        let mut calls = Vec::new();
        let mut pair_topics = Vec::new();
        while calls.len() < size {
            match rng.gen_range(0..10) {
                0..=2 => {
                    let to = cus.choose(&mut rng).unwrap();
                    calls.push(Call::new(&admin, ChannelId::trades(), "mint", mint_args(&to.identity.name, rng.gen_range(1..=30))));
                }
                3..=6 => {
                    let b = cus.choose(&mut rng).unwrap();
                    let id = listed.choose(&mut rng).unwrap();
                    calls.push(Call::new(b, ChannelId::trades(), "buy", buy_args(&b.identity.name, id, tier(&mut rng))));
                }
                7 if calls.len() + 2 <= size => {
                    let id = Hash256::digest(format!("{seed} photo {round} {}", calls.len()).as_bytes());
                    let owner = phs.choose(&mut rng).unwrap();
                    let p = prices(&mut rng, 10);
                    for j in 0..2 {
                        let t = format!("race-{seed}-{round}-{}-{j}", calls.len());
                        book.subscribe(d.net.msp(), &reader.identity, &t, d.net.anchor_ledger(&ChannelId::photos())?, None)?;
                        calls.push(publish_call(owner, &t, &[t.as_str()], &p, &id));
                        pair_topics.push((t, id));
                    }
                }
                _ => {
                    let key = format!("hot{}", rng.gen_range(0..2));
                    calls.push(Call::new(&admin, ChannelId::admin(), "put_config", put_config_args(&key, &[round as u8])));
                }
            }
        }
        sent += calls.len();
        let topics_by_call: Vec<Option<String>> = calls
            .iter()
            .map(|c| (c.function == "publish").then(|| String::from_utf8_lossy(&c.args[1]).into_owned()))
            .collect();
        let outcomes = d.batch(calls);
        for (o, t) in outcomes.iter().zip(topics_by_call) {
            if let Ok((id, loc)) = o {
                if !loc.flag.is_valid() {
                    invalid_outcomes.push((*id, *loc));
                }
                if let Some(t) = t {
                    winners.insert(t, loc.flag.is_valid());
                }
            }
        }
        ghosts.extend(pair_topics);
        run.txs += committed(&outcomes);
    }
    if !d.net.settle(20_000) {
        return Err(format!("seed {seed}: peers did not converge").into());
    }
    for ch in d.net.channels().to_vec() {
        let anchor = chain(&d.net, 0, &ch);
        let seq = oracle::sequential(&anchor).map_err(|e| format!("seed {seed} {ch}: {e}"))?;
        let live = d.net.peers()[0].ledger(&ch).unwrap();
        if oracle::entries_of(live.view().state()) != seq.state {
            run.errors.push(format!("seed {seed} {ch}: committed state differs from the sequential oracle"));
        }
        for p in 1..d.net.peers().len() {
            let other = chain(&d.net, p, &ch);
            let same = other.len() == anchor.len()
                && other.iter().zip(&anchor).all(|(a, b)| a.hash() == b.hash() && a.validation_flags == b.validation_flags);
            if !same {
                run.errors.push(format!("seed {seed} {ch}: peer{p} flags or blocks differ"));
            }
        }
        run.valid += seq.valid;
        run.invalid += seq.invalid;
        for leak in oracle::leaked_invalid_writes(&anchor, live.view().state()) {
            run.invisible_errors.push(format!("seed {seed} {ch}: {leak}"));
        }
    }
    // Invalid transactions stay in their blocks with their verdict.
    for (id, loc) in invalid_outcomes {
        let ch_blocks: Vec<Block> = d
            .net
            .channels()
            .iter()
            .map(|c| chain(&d.net, 0, c))
            .find_map(|b| {
                b.get(loc.block as usize)
                    .filter(|blk| blk.transactions.get(loc.index as usize).is_some_and(|t| t.tx_id == id))
                    .map(|_| b.clone())
            })
            .unwrap_or_default();
        let kept = ch_blocks
            .get(loc.block as usize)
            .is_some_and(|b| b.validation_flags[loc.index as usize] == loc.flag && !loc.flag.is_valid());
        if kept {
            run.retained += 1;
        } else {
            run.invisible_errors.push(format!("seed {seed}: invalid tx {} not retained", id.short()));
        }
    }
    // Losing publishes never reach a subscriber; winners do, once.
    let photos = d.net.anchor_ledger(&ChannelId::photos())?;
    for (t, _) in &ghosts {
        let (events, _) = book.poll(reader.identity.id, t, photos, None)?;
        let want = usize::from(winners.get(t).copied().unwrap_or(false));
        run.polled_events += events.len();
        run.ghost_topics += 1;
        if events.len() != want {
            run.invisible_errors.push(format!("seed {seed}: topic {t} polled {} events, expected {want}", events.len()));
        }
    }
    run.workloads += 1;
    Ok(())
}

fn conflict_runs() -> &'static Result<ConflictRun, String> {
    static RUN: OnceLock<Result<ConflictRun, String>> = OnceLock::new();
    RUN.get_or_init(|| {
        let mut run = ConflictRun::default();
        for seed in 0..100 {
            conflict_workload(2_000 + seed, &mut run).map_err(|e| e.to_string())?;
        }
        Ok(run)
    })
}

fn serializability() -> Res {
    let run = conflict_runs().as_ref().map_err(|e| e.clone())?;
    if let Some(e) = run.errors.first() {
        return Err(format!("{} mismatches, first: {e}", run.errors.len()).into());
    }
    if run.invalid == 0 {
        return Err("workloads induced no conflicts".into());
    }
    Ok(format!(
        "{} workloads, {} txs: {} valid, {} conflicting; state and flags match the sequential oracle on every peer",
        run.workloads, run.txs, run.valid, run.invalid
    ))
}

fn invalid_semantics() -> Res {
    let run = conflict_runs().as_ref().map_err(|e| e.clone())?;
    if let Some(e) = run.invisible_errors.first() {
        return Err(format!("{} violations, first: {e}", run.invisible_errors.len()).into());
    }
    if run.retained == 0 {
        return Err("no invalid transactions to check".into());
    }
    Ok(format!(
        "{} invalid txs retained in blocks, none of their writes visible; {} race topics polled {} events, losers none",
        run.retained, run.ghost_topics, run.polled_events
    ))
}

// 3. Coin conservation

fn coin_conservation() -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut d = Driver::new(NetworkConfig::default().with_seed(303))?;
    let admin = d.admin.clone();
    let phs: Vec<Client> = (0..40).map(|i| d.client(&format!("ph{i}"), Role::Photographer)).collect();
    let cus: Vec<Client> = (0..120).map(|i| d.client(&format!("cu{i}"), Role::Customer)).collect();
    let mut listings: Vec<(Hash256, Prices)> = Vec::new();
    let mut setup = Vec::new();
    for (i, owner) in phs.iter().enumerate() {
        let id = Hash256::digest(format!("coin photo {i}").as_bytes());
        let p = prices(&mut rng, 25);
        setup.push(Call::new(&admin, ChannelId::trades(), "register_listing", register_listing_args(&id, &owner.identity.name, &p)));
        listings.push((id, p));
    }
    d.batch(setup);
    let (mut ops, mut mints, mut buys, mut underfunded, mut conflicts) = (0usize, 0usize, 0usize, 0usize, 0usize);
    let mut wrong_rejections = Vec::new();
    while ops < 10_000 {
        let anchor = d.net.anchor_ledger(&ChannelId::trades())?;
        let snapshot: HashMap<String, u64> = cus
            .iter()
            .map(|c| {
                let bal = anchor
                    .get_state(&wallet_key(&c.identity.name))
                    .map(|(v, _)| u64::from_be_bytes(v.as_slice().try_into().expect("8 bytes")))
                    .unwrap_or(0);
                (c.identity.name.clone(), bal)
            })
            .collect();
        let mut calls = Vec::new();
        let mut intents = Vec::new();
        for _ in 0..40.min(10_000 - ops) {
            let who = cus.choose(&mut rng).unwrap();
            if rng.gen_bool(0.3) {
                calls.push(Call::new(&admin, ChannelId::trades(), "mint", mint_args(&who.identity.name, rng.gen_range(1..=60))));
                intents.push(None);
            } else {
                let (id, p) = listings.choose(&mut rng).unwrap();
                let t = tier(&mut rng);
                calls.push(Call::new(who, ChannelId::trades(), "buy", buy_args(&who.identity.name, id, t)));
                intents.push(Some((who.identity.name.clone(), p.get(t))));
            }
        }
        ops += calls.len();
        for (o, intent) in d.batch(calls).into_iter().zip(intents) {
            match (o, intent) {
                (Ok((_, loc)), None) if loc.flag.is_valid() => mints += 1,
                (Ok((_, loc)), Some(_)) if loc.flag.is_valid() => buys += 1,
                (Ok(_), _) => conflicts += 1,
                (Err(e), Some((buyer, price))) => match e.chaincode_error() {
                    Some(ChaincodeError::InsufficientFunds { .. }) => {
                        underfunded += 1;
                        if snapshot[&buyer] >= price {
                            wrong_rejections.push(format!("{buyer} refused at {price} holding {}", snapshot[&buyer]));
                        }
                    }
                    _ => return Err(format!("buy failed: {e}").into()),
                },
                (Err(e), None) => return Err(format!("mint failed: {e}").into()),
            }
        }
        d.net.settle(5_000);
    }
    if let Some(w) = wrong_rejections.first() {
        return Err(format!("funded buys rejected: {w}").into());
    }
    let blocks = chain(&d.net, 0, &ChannelId::trades());
    let book = oracle::coin_audit(&blocks)?;
    let checked = oracle::state_invariants(&blocks)?;
    let state = d.net.anchor_ledger(&ChannelId::trades())?;
    for c in &cus {
        let live = state
            .get_state(&wallet_key(&c.identity.name))
            .map(|(v, _)| u64::from_be_bytes(v.as_slice().try_into().unwrap()))
            .unwrap_or(0);
        if live != book.balance(&c.identity.name) {
            return Err(format!("{} holds {live}, oracle says {}", c.identity.name, book.balance(&c.identity.name)).into());
        }
    }
    if underfunded == 0 || buys == 0 {
        return Err("workload never exercised both sides of the funds rule".into());
    }
    Ok(format!(
        "{ops} ops: {mints} mints, {buys} buys, {underfunded} underfunded refused, {conflicts} conflicts; {} coins conserved across {checked} blocks",
        book.minted
    ))
}

// 5. Raft safety

#[derive(Default)]
struct Watch {
    leaders: HashMap<u64, usize>,
    committed: HashMap<u64, u64>,
    seen_commit: Vec<u64>,
    peer_blocks: HashMap<(ChannelId, u64), Hash256>,
    violations: Vec<String>,
}

impl Watch {
    fn observe(&mut self, net: &Network) {
        self.seen_commit.resize(net.orderers().len(), 0);
        for (i, o) in net.orderers().iter().enumerate() {
            let r = o.raft();
            if r.is_leader() {
                let prev = *self.leaders.entry(r.term()).or_insert(i);
                if prev != i {
                    self.violations.push(format!("term {}: leaders {prev} and {i}", r.term()));
                }
            }
            let c = r.commit_index();
            for idx in self.seen_commit[i] + 1..=c {
                let term = r.log()[idx as usize - 1].term;
                let prev = *self.committed.entry(idx).or_insert(term);
                if prev != term {
                    self.violations.push(format!("index {idx} committed in terms {prev} and {term}"));
                }
            }
            self.seen_commit[i] = self.seen_commit[i].max(c);
        }
    }

    fn sample_peers(&mut self, net: &Network) {
        for peer in net.peers() {
            for (ch, ledger) in peer.ledgers() {
                let view = ledger.view();
                let from = view.height().saturating_sub(3);
                for b in &view.blocks()[from as usize..] {
                    let prev = *self.peer_blocks.entry((ch.clone(), b.number())).or_insert(b.hash());
                    if prev != b.hash() {
                        self.violations.push(format!("{ch} block {} forked across peers", b.number()));
                    }
                }
            }
        }
    }
}

fn orderers_agree(net: &Network) -> bool {
    net.channels().iter().all(|ch| {
        let h: BTreeSet<Option<u64>> = net.orderers().iter().map(|o| o.height(ch)).collect();
        h.len() == 1
    })
}

fn raft_sim(seed: u64) -> Result<(u64, usize), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cfg = NetworkConfig {
        orderers: 5,
        ..NetworkConfig::default().with_seed(seed)
    };
    cfg.simnet.drop_probability = rng.gen_range(0.0..=0.10);
    let mut d = Driver::new(cfg).map_err(|e| e.to_string())?;
    let admin = d.admin.clone();
    let mut w = Watch::default();
    let mut sent: Vec<Transaction> = Vec::new();
    let partition_at = rng.gen_range(300..900u64);
    let partition_len = rng.gen_range(300..1200u64);
    let crash_at = rng.gen_range(1500..2500u64);
    let crash_len = rng.gen_range(200..900u64);
    let mut crashed: Option<usize> = None;
    for t in 0..4000u64 {
        if t % 100 == 0 {
            for k in 0..3 {
                let to = format!("w{}", rng.gen_range(0..6));
                if let Ok(tx) = d.net.prepare(&admin, &ChannelId::trades(), "mint", mint_args(&to, 1 + k)) {
                    d.net.submit(&tx);
                    sent.push(tx);
                }
            }
        }
        if t == partition_at {
            if let Some(l) = d.net.leader() {
                let mut nodes = BTreeSet::from([NodeAddr::Orderer(l)]);
                if rng.gen_bool(0.5) {
                    nodes.insert(NodeAddr::Orderer((l + 1) % 5));
                }
                d.net.partition(nodes, partition_len).map_err(|e| e.to_string())?;
            }
        }
        if t == crash_at {
            if let Some(l) = d.net.leader() {
                d.net.crash(NodeAddr::Orderer(l)).map_err(|e| e.to_string())?;
                crashed = Some(l);
            }
        }
        if t == crash_at + crash_len {
            if let Some(l) = crashed.take() {
                d.net.restart(NodeAddr::Orderer(l)).map_err(|e| e.to_string())?;
            }
        }
        d.net.step();
        w.observe(&d.net);
        if t % 50 == 0 {
            w.sample_peers(&d.net);
        }
    }
    if let Some(l) = crashed.take() {
        d.net.restart(NodeAddr::Orderer(l)).map_err(|e| e.to_string())?;
    }
    d.net.heal();
    d.net.set_drop_probability(0.0);
    let mut settled = false;
    for _ in 0..30_000 {
        d.net.step();
        w.observe(&d.net);
        if d.net.leader().is_some() && d.net.converged() {
            settled = true;
            break;
        }
    }
    if !settled {
        return Err(format!("seed {seed}: no convergence after heal"));
    }
    // Anything not yet ordered goes through once more; nothing is lost.
    for tx in &sent {
        if d.net.tx_status(tx.channel(), &tx.tx_id).is_none() {
            d.net.submit_until_accepted(tx, 5_000).map_err(|e| format!("seed {seed}: {e}"))?;
        }
    }
    for tx in &sent {
        if d.net.tx_status(tx.channel(), &tx.tx_id).is_none() {
            d.net.await_commit(tx).map_err(|e| format!("seed {seed}: {e}"))?;
        }
    }
    for _ in 0..20_000 {
        if d.net.converged() && orderers_agree(&d.net) {
            break;
        }
        d.net.step();
        w.observe(&d.net);
    }
    w.sample_peers(&d.net);
    if let Some(v) = w.violations.first() {
        return Err(format!("seed {seed}: {v}"));
    }
    for ((ch, n), h) in &w.peer_blocks {
        for peer in d.net.peers() {
            let got = peer.ledger(ch).and_then(|l| l.view().blocks().get(*n as usize).map(Block::hash));
            if got != Some(*h) {
                return Err(format!("seed {seed}: {ch} block {n} lost or replaced on peer{}", peer.index()));
            }
        }
    }
    for (i, o) in d.net.orderers().iter().enumerate() {
        for (idx, term) in &w.committed {
            if o.raft().commit_index() >= *idx && o.raft().log()[*idx as usize - 1].term != *term {
                return Err(format!("seed {seed}: orderer{i} rewrote committed index {idx}"));
            }
        }
    }
    let mut count = 0;
    for ch in d.net.channels().to_vec() {
        let reference = hashes(&chain(&d.net, 0, &ch));
        for p in 1..d.net.peers().len() {
            if hashes(&chain(&d.net, p, &ch)) != reference {
                return Err(format!("seed {seed}: peer{p} {ch} differs after heal"));
            }
        }
        for (i, o) in d.net.orderers().iter().enumerate() {
            let oh: Vec<Hash256> = o.blocks(&ch).unwrap_or_default().iter().map(|b| b.hash()).collect();
            if oh != reference {
                let common = oh.iter().zip(&reference).take_while(|(a, b)| a == b).count();
                return Err(format!(
                    "seed {seed}: orderer{i} {ch} differs from peers (orderer {} blocks, peers {}, common prefix {common}, commit {} log {})",
                    oh.len(),
                    reference.len(),
                    o.raft().commit_index(),
                    o.raft().log().len()
                ));
            }
        }
        count += reference.len();
    }
    let max_term = w.leaders.keys().max().copied().unwrap_or(0);
    Ok((max_term, count))
}

fn raft_safety() -> Res {
    let (mut terms, mut blocks) = (0u64, 0usize);
    for seed in 0..100 {
        let (t, b) = raft_sim(5_000 + seed)?;
        terms += t;
        blocks += b;
    }
    Ok(format!(
        "100 five-orderer runs with drops up to 10%, leader partitions and crashes: one leader per term ({terms} terms), no committed entry lost, {blocks} blocks identical on all peers and orderers after heal"
    ))
}

// 6. Liveness

fn liveness() -> Res {
    let cfg = NetworkConfig::default();
    let bound = cfg.block_cut.max_wait + 5 * cfg.raft.heartbeat_interval;
    let (mut worst, mut late, mut trials) = (0u64, 0usize, 0usize);
    let mut sum = 0u64;
    for net_seed in 0..10u64 {
        let mut d = Driver::new(NetworkConfig::default().with_seed(600 + net_seed))?;
        let admin = d.admin.clone();
        d.net.run(1_000);
        for trial in 0..100u64 {
            let tx = d.net.prepare(&admin, &ChannelId::trades(), "mint", mint_args(&format!("w{trial}"), 1))?;
            let start = d.net.now();
            d.net.submit_until_accepted(&tx, bound)?;
            let channel = tx.channel().clone();
            let id = tx.tx_id;
            d.net.run_until(10 * bound, |n| n.tx_status(&channel, &id).is_some());
            let took = d.net.now() - start;
            worst = worst.max(took);
            sum += took;
            if took > bound {
                late += 1;
            }
            trials += 1;
            // Spread submissions over the block timer.
            d.net.run(trial * 37 % 200);
        }
    }
    if late > 0 {
        return Err(format!("{late}/{trials} deliveries over {bound} ticks (worst {worst})").into());
    }
    Ok(format!(
        "{trials} trials delivered within {bound} ticks (worst {worst}, mean {})",
        sum / trials as u64
    ))
}

// 7. Pub/sub exactly-once

fn pubsub_exactly_once() -> Res {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let dir = tempfile::tempdir()?;
    let mut cfg = NetworkConfig::default().with_seed(707);
    // Lossy, slow links: retransmission has to cover both.
    cfg.simnet.drop_probability = 0.05;
    cfg.simnet.max_delay = 40;
    let gw = Gateway::new(
        GatewayConfig {
            blob_dir: dir.path().join("blobs"),
            ..Default::default()
        },
        Network::new(cfg)?,
    )?;
    let token = |name: &str, role: &str| -> Result<String, Box<dyn Error>> {
        gw.register(RegisterRequest {
            name: name.into(),
            secret: "pw".into(),
            role: role.into(),
            profile: BTreeMap::new(),
        })?;
        Ok(gw
            .login(LoginRequest {
                name: name.into(),
                secret: "pw".into(),
            })?
            .token)
    };
    let phs: Vec<String> = (0..3).map(|i| token(&format!("ph{i}"), "photographer")).collect::<Result<_, _>>()?;
    let subs: Vec<String> = (0..50).map(|i| token(&format!("sub{i}"), "customer")).collect::<Result<_, _>>()?;

    #[derive(Clone, Copy)]
    enum Op {
        First(usize),
        Subscribe,
        Publish,
        Poll,
    }
    let mut ops: Vec<Op> = (0..50).map(Op::First).collect();
    ops.extend([Op::Subscribe; 50]);
    ops.extend([Op::Publish; 60]);
    ops.extend([Op::Poll; 150]);
    ops.shuffle(&mut rng);

    let mut published: Vec<(Hash256, Vec<&str>)> = Vec::new();
    let mut start: BTreeMap<(usize, &str), usize> = BTreeMap::new();
    let mut got: BTreeMap<(usize, &str), Vec<Hash256>> = BTreeMap::new();
    let mut polls = 0;
    let mut poll = |s: usize, t: &'static str, got: &mut BTreeMap<(usize, &str), Vec<Hash256>>| -> Result<(), Box<dyn Error>> {
        let r = gw.poll(&subs[s], t, None)?;
        got.entry((s, t)).or_default().extend(r.events.iter().map(|e| e.photo_id));
        polls += 1;
        Ok(())
    };
    for op in ops {
        match op {
            Op::First(_) | Op::Subscribe => {
                let s = match op {
                    Op::First(s) => s,
                    _ => rng.gen_range(0..subs.len()),
                };
                let t = *TOPICS.choose(&mut rng).unwrap();
                gw.subscribe(&subs[s], SubscribeRequest { topic: t.into() })?;
                start.entry((s, t)).or_insert(published.len());
            }
            Op::Publish => {
                let cats = topics(&mut rng);
                let mut image = b"\x89PNG\r\n\x1a\n".to_vec();
                image.extend_from_slice(format!("frame {}", published.len()).as_bytes());
                let ph = phs.choose(&mut rng).unwrap();
                let r = gw.publish(
                    ph,
                    Upload {
                        title: format!("p{}", published.len()),
                        categories: cats.iter().map(|c| c.to_string()).collect(),
                        prices: prices(&mut rng, 10),
                        image,
                    },
                )?;
                published.push((r.photo_id, cats));
            }
            Op::Poll if !start.is_empty() => {
                let keys: Vec<(usize, &'static str)> = start.keys().copied().collect();
                let (s, t) = *keys.choose(&mut rng).unwrap();
                poll(s, t, &mut got)?;
            }
            _ => {}
        }
    }
    let keys: Vec<(usize, &'static str)> = start.keys().copied().collect();
    for (s, t) in &keys {
        poll(*s, t, &mut got)?;
    }
    let mut delivered = 0;
    for (key, from) in &start {
        let want: Vec<Hash256> = published[*from..]
            .iter()
            .filter(|(_, cats)| cats.contains(&key.1))
            .map(|(id, _)| *id)
            .collect();
        let have = got.get(key).cloned().unwrap_or_default();
        if have != want {
            return Err(format!("sub{} on {}: got {} events, brute force says {}", key.0, key.1, have.len(), want.len()).into());
        }
        delivered += have.len();
    }
    let subscribers: BTreeSet<usize> = start.keys().map(|k| k.0).collect();
    if subscribers.len() != 50 {
        return Err(format!("only {} subscribers", subscribers.len()).into());
    }
    Ok(format!(
        "50 subscribers, {} subscriptions over 4 topics, {} publishes, {polls} polls with 5% loss: {delivered} deliveries equal the brute-force filter",
        start.len(),
        published.len()
    ))
}

// 8. HTTP demo

async fn http_demo_flow() -> Res {
    let dir = tempfile::tempdir()?;
    let gw = Arc::new(Gateway::new(
        GatewayConfig {
            blob_dir: dir.path().join("blobs"),
            ..Default::default()
        },
        Network::new(NetworkConfig::default().with_seed(808))?,
    )?);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await?;
    let base = format!("http://{}", listener.local_addr()?);
    tokio::spawn(serve(gw.clone(), listener));
    let http = reqwest::Client::new();
    let post = |path: &str, token: Option<&str>, body: Value| {
        let mut r = http.post(format!("{base}{path}")).json(&body);
        if let Some(t) = token {
            r = r.bearer_auth(t);
        }
        r.send()
    };
    let expect = |status: reqwest::StatusCode, want: u16, what: &str| -> Result<(), Box<dyn Error>> {
        if status.as_u16() != want {
            return Err(format!("{what}: status {status}").into());
        }
        Ok(())
    };
    for (name, role) in [("alice", "photographer"), ("bob", "customer")] {
        let r = post("/register", None, json!({"name": name, "secret": "pw", "role": role})).await?;
        expect(r.status(), 201, "register")?;
    }
    let mut tokens = HashMap::new();
    for (name, secret) in [("alice", "pw"), ("bob", "pw"), ("admin", "admin")] {
        let r = post("/login", None, json!({"name": name, "secret": secret})).await?;
        expect(r.status(), 200, "login")?;
        let v: Value = r.json().await?;
        tokens.insert(name, v["token"].as_str().unwrap_or_default().to_string());
    }
    let r = post("/admin/mint", Some(&tokens["admin"]), json!({"recipient": "bob", "amount": 100})).await?;
    expect(r.status(), 200, "mint")?;
    let r = post("/subscriptions", Some(&tokens["bob"]), json!({"topic": "nature"})).await?;
    expect(r.status(), 200, "subscribe")?;
    let mut image = b"\x89PNG\r\n\x1a\n".to_vec();
    image.extend((0..20_000u32).map(|i| (i * 31 % 251) as u8));
    let r = post(
        "/photos",
        Some(&tokens["alice"]),
        json!({
            "title": "Lake",
            "categories": ["nature"],
            "prices": {"personal": 10, "editorial": 30, "commercial": 90},
            "image": base64::engine::general_purpose::STANDARD.encode(&image),
        }),
    )
    .await?;
    expect(r.status(), 201, "publish")?;
    let photo = r.json::<Value>().await?["photo_id"].as_str().unwrap_or_default().to_string();
    let r = post("/buy", Some(&tokens["bob"]), json!({"photo_id": photo, "tier": "editorial"})).await?;
    expect(r.status(), 200, "buy")?;
    let get = |path: String, token: &str| http.get(format!("{base}{path}")).bearer_auth(token).send();
    let r = get("/subscriptions?topic=nature".into(), &tokens["bob"]).await?;
    expect(r.status(), 200, "poll")?;
    let events = r.json::<Value>().await?["events"].clone();
    if events.as_array().map(Vec::len) != Some(1) || events[0]["photo_id"] != photo.as_str() {
        return Err(format!("poll returned {events}").into());
    }
    let r = get(format!("/download/{photo}"), &tokens["bob"]).await?;
    expect(r.status(), 200, "download")?;
    let bytes = r.bytes().await?;
    if bytes.as_ref() != image.as_slice() {
        return Err("downloaded bytes differ".into());
    }
    let mut balances = Vec::new();
    for who in ["bob", "alice"] {
        let v: Value = get("/wallet".into(), &tokens[who]).await?.json().await?;
        balances.push(v["balance"].as_u64().unwrap_or(u64::MAX));
    }
    gw.stop_clock();
    if balances != [70, 30] {
        return Err(format!("balances bob={} alice={}", balances[0], balances[1]).into());
    }
    Ok(format!("buyer 70, seller 30, {} bytes downloaded bit-identical", bytes.len()))
}

fn http_demo() -> Res {
    tokio::runtime::Builder::new_multi_thread()
        .worker_threads(4)
        .enable_all()
        .build()?
        .block_on(http_demo_flow())
}

struct Criterion {
    n: u32,
    name: &'static str,
    limit: Option<Duration>,
    run: fn() -> Res,
}

const CRITERIA: [Criterion; 8] = [
    Criterion {
        n: 1,
        name: "chain integrity",
        limit: Some(Duration::from_secs(30)),
        run: chain_integrity,
    },
    Criterion {
        n: 2,
        name: "serializability oracle",
        limit: Some(Duration::from_secs(60)),
        run: serializability,
    },
    Criterion {
        n: 3,
        name: "coin conservation and atomic purchase",
        limit: Some(Duration::from_secs(60)),
        run: coin_conservation,
    },
    Criterion {
        n: 4,
        name: "invalid transaction semantics",
        limit: None,
        run: invalid_semantics,
    },
    Criterion {
        n: 5,
        name: "raft safety",
        limit: Some(Duration::from_secs(120)),
        run: raft_safety,
    },
    Criterion {
        n: 6,
        name: "liveness",
        limit: None,
        run: liveness,
    },
    Criterion {
        n: 7,
        name: "pub/sub exactly-once",
        limit: None,
        run: pubsub_exactly_once,
    },
    Criterion {
        n: 8,
        name: "end-to-end demo over HTTP",
        limit: Some(Duration::from_secs(10)),
        run: http_demo,
    },
];

fn main() {
    let picked: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for c in CRITERIA.iter().filter(|c| picked.is_empty() || picked.contains(&c.n)) {
        let t0 = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(c.run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg.into())
        });
        let took = t0.elapsed();
        let over = c.limit.is_some_and(|l| took > l);
        let limit = c.limit.map(|l| format!(" limit {}s", l.as_secs())).unwrap_or_default();
        let (verdict, detail) = match result {
            Ok(d) if !over => ("PASS", d),
            Ok(d) => ("FAIL", format!("too slow; {d}")),
            Err(e) => ("FAIL", e.to_string()),
        };
        if verdict == "FAIL" {
            failed += 1;
        }
        println!("criterion {} {verdict} {}: {detail} [{:.1}s{limit}]", c.n, c.name, took.as_secs_f64());
    }
    if failed > 0 {
        std::process::exit(1);
    }
}
