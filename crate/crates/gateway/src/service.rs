//! The gateway's operations, independent of HTTP. Every write is driven
//! through endorse, order and validate, and reported only once the anchor
//! peer has committed it.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use parking_lot::{Condvar, Mutex, MutexGuard};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use hyperpubsub_core::chaincode::admin::{decode_config, get_config_args};
use hyperpubsub_core::chaincode::clients::{create_account_args, decode_account, get_account_args};
use hyperpubsub_core::chaincode::photos::{decode_photo, decode_photo_list, get_photo_args, list_by_category_args, publish_args};
use hyperpubsub_core::chaincode::trades::{
    balance_args, buy_args, decode_amount, decode_balance, has_grant_args, mint_args, register_listing_args,
};
use hyperpubsub_core::chaincode::{Account, ChaincodeError, PhotoRecord, Prices, TradeRecord};
use hyperpubsub_core::codec::Canonical;
use hyperpubsub_core::endorsement::EndorsementError;
use hyperpubsub_core::identity::MspError;
use hyperpubsub_core::ledger::TxLocation;
use hyperpubsub_core::ordering::SubmitResult;
use hyperpubsub_core::pubsub::{parse_whitelist, PubSubError, SubscriptionBook};
use hyperpubsub_core::{ChannelId, Client, Committed, Hash256, Identity, Network, PipelineError, Role, ValidationFlag};

use crate::api::*;
use crate::blob::{BlobStore, ImageFormat, MAX_IMAGE_BYTES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewayConfig {
    pub listen: String,
    pub blob_dir: PathBuf,
    /// Subscription book file; in memory when unset.
    pub subscriptions_file: Option<PathBuf>,
    pub admin_name: String,
    pub admin_secret: String,
    /// Extra attempts for a buy that lost an MVCC race.
    pub buy_retries: u32,
    /// Simulated ticks per wall-clock millisecond when serving.
    pub ticks_per_ms: u64,
}

impl Default for GatewayConfig {
    fn default() -> Self {
        GatewayConfig {
            listen: "127.0.0.1:8080".into(),
            blob_dir: PathBuf::from("blobs"),
            subscriptions_file: None,
            admin_name: "admin".into(),
            admin_secret: "admin".into(),
            buy_retries: 2,
            ticks_per_ms: 2,
        }
    }
}

/// An operation's failure as the HTTP status and error body it maps to.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{status} {code}: {message}")]
pub struct ApiError {
    pub status: u16,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: u16, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(400, "bad-request", message)
    }

    pub fn forbidden(message: impl Into<String>) -> Self {
        Self::new(403, "forbidden", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(500, "internal", message)
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            code: self.code.to_string(),
            message: self.message.clone(),
        }
    }
}

impl From<ChaincodeError> for ApiError {
    fn from(e: ChaincodeError) -> Self {
        use ChaincodeError::*;
        let (status, code) = match &e {
            InsufficientFunds { .. } => (402, "insufficient-funds"),
            UnknownPhoto(_) => (404, "unknown-photo"),
            PhotoExists(_) => (409, "already-published"),
            AccountExists(_) => (409, "account-exists"),
            ListingExists(_) => (409, "listing-exists"),
            NotOwner | NotAdmin => (403, "forbidden"),
            BadPrices(_) => (400, "bad-prices"),
            NoCategory => (400, "bad-categories"),
            BadAmount => (400, "bad-amount"),
            SelfPurchase => (400, "self-purchase"),
            Overflow => (400, "overflow"),
            UnknownFunction(_) | ArgCount { .. } | InvalidArgument(_) => (400, "bad-request"),
            Corrupt(_) => (500, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<MspError> for ApiError {
    fn from(e: MspError) -> Self {
        use MspError::*;
        let (status, code) = match &e {
            DuplicateName(_) => (409, "name-taken"),
            UnknownIdentity(_) => (404, "unknown-user"),
            BadCredential | NoCredential(_) => (401, "bad-credential"),
            InvalidSession | SessionExpired => (401, "unauthorized"),
            NotEnrolled(_) => (403, "not-enrolled"),
            UnknownRole(_) | EmptyName => (400, "bad-request"),
            Document(_) => (500, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<PubSubError> for ApiError {
    fn from(e: PubSubError) -> Self {
        let (status, code) = match &e {
            PubSubError::AccessDenied(_) => (403, "forbidden"),
            PubSubError::UnknownTopic(_) => (400, "unknown-topic"),
            PubSubError::EmptyTopic => (400, "bad-request"),
            PubSubError::NotSubscribed(_) => (404, "not-subscribed"),
            PubSubError::Store(_) => (500, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

impl From<PipelineError> for ApiError {
    fn from(e: PipelineError) -> Self {
        let msg = e.to_string();
        match e {
            PipelineError::Endorsement(EndorsementError::Simulation(c)) | PipelineError::Query(c) => c.into(),
            PipelineError::Endorsement(EndorsementError::AccessDenied(_)) | PipelineError::AccessDenied(_) => {
                ApiError::forbidden(msg)
            }
            PipelineError::Endorsement(_) => ApiError::new(503, "endorsement-failed", msg),
            PipelineError::Msp(m) => m.into(),
            PipelineError::Invalid { flag, .. } => match flag {
                ValidationFlag::MvccConflict => ApiError::new(409, "mvcc-conflict", msg),
                ValidationFlag::AccessDenied => ApiError::forbidden(msg),
                _ => ApiError::new(500, "policy-failure", msg),
            },
            PipelineError::Unavailable | PipelineError::NoPeer => ApiError::new(503, "unavailable", msg),
            PipelineError::Timeout(_) => ApiError::new(504, "timeout", msg),
            _ => ApiError::internal(msg),
        }
    }
}

#[derive(Debug, Error)]
pub enum SetupError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    PubSub(#[from] PubSubError),
    #[error("no orderer leader elected")]
    NoLeader,
}

/// Downloaded image bytes with their sniffed content type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Download {
    pub bytes: Vec<u8>,
    pub content_type: &'static str,
}

/// Validated upload, image already decoded.
#[derive(Debug, Clone)]
pub struct Upload {
    pub title: String,
    pub categories: Vec<String>,
    pub prices: Prices,
    pub image: Vec<u8>,
}

type Clock = Box<dyn Fn() -> u64 + Send + Sync>;

pub struct Gateway {
    cfg: GatewayConfig,
    net: Mutex<Network>,
    ticked: Condvar,
    clocked: AtomicBool,
    stop: AtomicBool,
    blobs: BlobStore,
    subs: SubscriptionBook,
    clients: Mutex<HashMap<String, Client>>,
    admin: Client,
    clock: Clock,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway").field("cfg", &self.cfg).finish_non_exhaustive()
    }
}

fn wall_seconds() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && name.len() <= 64
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn parse_photo_id(raw: &str) -> Result<Hash256, ApiError> {
    Hash256::from_hex(raw).map_err(|_| ApiError::bad_request(format!("bad photo id {raw:?}")))
}

impl Gateway {
    /// Seeds the admin login, opens the stores and waits for an orderer
    /// leader.
    pub fn new(cfg: GatewayConfig, mut net: Network) -> Result<Self, SetupError> {
        let blobs = BlobStore::open(&cfg.blob_dir)?;
        let subs = match &cfg.subscriptions_file {
            Some(p) => SubscriptionBook::open(p)?,
            None => SubscriptionBook::new(),
        };
        let admin = net.enroll(&cfg.admin_name, Role::Admin, Some(&cfg.admin_secret))?;
        if net.leader().is_none() && net.elect_leader(20_000).is_none() {
            return Err(SetupError::NoLeader);
        }
        let clients = HashMap::from([(admin.identity.name.clone(), admin.clone())]);
        Ok(Gateway {
            cfg,
            net: Mutex::new(net),
            ticked: Condvar::new(),
            clocked: AtomicBool::new(false),
            stop: AtomicBool::new(false),
            blobs,
            subs,
            clients: Mutex::new(clients),
            admin,
            clock: Box::new(wall_seconds),
        })
    }

    /// Replaces the wall clock used for session expiry.
    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn config(&self) -> &GatewayConfig {
        &self.cfg
    }

    pub fn blobs(&self) -> &BlobStore {
        &self.blobs
    }

    /// Exclusive access to the simulated network.
    pub fn network(&self) -> MutexGuard<'_, Network> {
        self.net.lock()
    }

    /// Runs the network in real time on a background thread. Until then,
    /// waiting callers step the network themselves.
    pub fn start_clock(self: &Arc<Self>) -> JoinHandle<()> {
        self.clocked.store(true, Ordering::SeqCst);
        let gw = Arc::clone(self);
        std::thread::spawn(move || {
            let per_ms = gw.cfg.ticks_per_ms.max(1);
            while !gw.stop.load(Ordering::SeqCst) {
                std::thread::sleep(Duration::from_millis(1));
                let mut net = gw.net.lock();
                net.run(per_ms);
                gw.ticked.notify_all();
            }
        })
    }

    pub fn stop_clock(&self) {
        self.stop.store(true, Ordering::SeqCst);
    }

    fn advance(&self, net: &mut MutexGuard<'_, Network>) {
        if self.clocked.load(Ordering::SeqCst) {
            self.ticked.wait_for(net, Duration::from_millis(20));
        } else {
            net.step();
            MutexGuard::bump(net);
        }
    }

    /// Submits and waits for the anchor peer to commit, resubmitting the
    /// same transaction after each commit timeout.
    fn order(&self, net: &mut MutexGuard<'_, Network>, tx: &hyperpubsub_core::Transaction) -> Result<TxLocation, ApiError> {
        let timeout = net.config().commit_timeout;
        let resubmissions = net.config().resubmissions;
        let channel = tx.channel().clone();
        let mut attempts = 0;
        let mut accepted = false;
        let mut deadline = net.now() + timeout;
        loop {
            if !accepted {
                accepted = matches!(net.submit(tx), SubmitResult::Accepted { .. });
            }
            if let Some(loc) = net.tx_status(&channel, &tx.tx_id) {
                return Ok(loc);
            }
            if net.now() >= deadline {
                if attempts >= resubmissions {
                    return Err(PipelineError::Timeout(tx.tx_id).into());
                }
                attempts += 1;
                accepted = false;
                deadline = net.now() + timeout;
            }
            self.advance(net);
        }
    }

    fn invoke(&self, client: &Client, channel: &ChannelId, function: &str, args: Vec<Vec<u8>>) -> Result<Committed, ApiError> {
        let mut net = self.net.lock();
        let tx = net.prepare(client, channel, function, args)?;
        let location = self.order(&mut net, &tx)?;
        if !location.flag.is_valid() {
            return Err(PipelineError::Invalid {
                tx_id: tx.tx_id,
                flag: location.flag,
            }
            .into());
        }
        Ok(Committed {
            tx_id: tx.tx_id,
            response: tx.response,
            location,
        })
    }

    fn query(&self, identity: &Identity, channel: &ChannelId, function: &str, args: Vec<Vec<u8>>) -> Result<Vec<u8>, ApiError> {
        Ok(self.net.lock().query(identity, channel, function, args)?)
    }

    fn session(&self, token: &str) -> Result<(Identity, Client), ApiError> {
        let identity = self.net.lock().msp().validate_session(token, (self.clock)())?;
        let client = self
            .clients
            .lock()
            .get(&identity.name)
            .cloned()
            .ok_or_else(|| ApiError::new(401, "unauthorized", "no key held for this identity"))?;
        Ok((identity, client))
    }

    fn require_role(identity: &Identity, role: Role) -> Result<(), ApiError> {
        if identity.role == role {
            Ok(())
        } else {
            Err(ApiError::forbidden(format!(
                "{} is a {}, this needs a {}",
                identity.name,
                identity.role.as_str(),
                role.as_str()
            )))
        }
    }

    fn account(&self, name: &str) -> Result<Option<Account>, ApiError> {
        let raw = self.query(&self.admin.identity, &ChannelId::clients(), "get_account", get_account_args(name))?;
        Ok(decode_account(&raw)?)
    }

    fn photo(&self, id: &Hash256) -> Result<Option<PhotoRecord>, ApiError> {
        let raw = self.query(&self.admin.identity, &ChannelId::photos(), "get_photo", get_photo_args(id))?;
        Ok(decode_photo(&raw)?)
    }

    /// Category whitelist from the admin channel, if one is configured.
    pub fn whitelist(&self) -> Result<Option<BTreeSet<String>>, ApiError> {
        let raw = self.query(&self.admin.identity, &ChannelId::admin(), "get_config", get_config_args("categories"))?;
        Ok(decode_config(&raw)?.map(|v| parse_whitelist(&v)).filter(|w| !w.is_empty()))
    }

    pub fn register(&self, req: RegisterRequest) -> Result<RegisterResponse, ApiError> {
        if !valid_name(&req.name) {
            return Err(ApiError::bad_request("name must be 1-64 characters of [A-Za-z0-9_.-]"));
        }
        if req.secret.is_empty() {
            return Err(ApiError::bad_request("secret must not be empty"));
        }
        let role = match req.role.as_str() {
            "photographer" => Role::Photographer,
            "customer" => Role::Customer,
            other => return Err(ApiError::bad_request(format!("cannot register as {other:?}"))),
        };
        let client = self.net.lock().enroll(&req.name, role, Some(&req.secret))?;
        self.clients.lock().insert(req.name.clone(), client.clone());
        self.invoke(
            &client,
            &ChannelId::clients(),
            "create_account",
            create_account_args(&req.name, role, &req.profile),
        )?;
        Ok(RegisterResponse {
            name: req.name,
            role: role.as_str().to_string(),
        })
    }

    pub fn login(&self, req: LoginRequest) -> Result<LoginResponse, ApiError> {
        let session = self.net.lock().msp().authenticate(&req.name, &req.secret, (self.clock)())?;
        let (identity, _) = self.session(&session.token)?;
        let photos = self.list_for(&identity, None)?;
        Ok(LoginResponse {
            token: session.token,
            expires_at: session.expires_at,
            role: identity.role.as_str().to_string(),
            photos,
        })
    }

    pub fn logout(&self, token: &str) -> bool {
        self.net.lock().msp().revoke_session(token)
    }

    fn list_for(&self, identity: &Identity, category: Option<&str>) -> Result<Vec<PhotoView>, ApiError> {
        let raw = self.query(
            identity,
            &ChannelId::photos(),
            "list_by_category",
            list_by_category_args(category.unwrap_or("")),
        )?;
        let mut profiles: HashMap<String, BTreeMap<String, String>> = HashMap::new();
        let mut out = Vec::new();
        for rec in decode_photo_list(&raw)? {
            if !profiles.contains_key(&rec.owner) {
                let p = self.account(&rec.owner)?.map(|a| a.profile).unwrap_or_default();
                profiles.insert(rec.owner.clone(), p);
            }
            let profile = profiles[&rec.owner].clone();
            out.push(PhotoView::new(rec, profile));
        }
        Ok(out)
    }

    pub fn list_photos(&self, token: &str, category: Option<&str>) -> Result<PhotoList, ApiError> {
        let (identity, _) = self.session(token)?;
        Ok(PhotoList {
            photos: self.list_for(&identity, category.filter(|c| !c.is_empty()))?,
        })
    }

    pub fn publish(&self, token: &str, up: Upload) -> Result<PublishResponse, ApiError> {
        let (identity, client) = self.session(token)?;
        Self::require_role(&identity, Role::Photographer)?;
        if up.image.is_empty() {
            return Err(ApiError::bad_request("empty image"));
        }
        if up.image.len() > MAX_IMAGE_BYTES {
            return Err(ApiError::new(413, "too-large", format!("image exceeds {MAX_IMAGE_BYTES} bytes")));
        }
        if ImageFormat::sniff(&up.image).is_none() {
            return Err(ApiError::new(415, "unsupported-media-type", "not a recognized raster image"));
        }
        if up.title.trim().is_empty() {
            return Err(ApiError::bad_request("empty title"));
        }
        let categories: BTreeSet<String> = up
            .categories
            .iter()
            .map(|c| c.trim().to_string())
            .filter(|c| !c.is_empty())
            .collect();
        if categories.is_empty() {
            return Err(ChaincodeError::NoCategory.into());
        }
        if let Some(allowed) = self.whitelist()? {
            if let Some(bad) = categories.iter().find(|c| !allowed.contains(*c)) {
                return Err(ApiError::new(400, "bad-categories", format!("category {bad:?} is not allowed")));
            }
        }
        let prices = Prices::from_pairs(&up.prices.pairs())?;
        let photo_id = BlobStore::address(&up.image);
        if self.photo(&photo_id)?.is_some() {
            return Err(ChaincodeError::PhotoExists(photo_id.to_hex()).into());
        }
        self.blobs
            .put(&up.image)
            .map_err(|e| ApiError::internal(format!("blob store: {e}")))?;
        let cats: Vec<&str> = categories.iter().map(String::as_str).collect();
        self.invoke(
            &client,
            &ChannelId::photos(),
            "publish",
            publish_args(&identity.name, &up.title, &cats, &prices.pairs(), &photo_id),
        )?;
        match self.invoke(
            &self.admin,
            &ChannelId::trades(),
            "register_listing",
            register_listing_args(&photo_id, &identity.name, &prices),
        ) {
            Ok(_) => {}
            Err(e) if e.code == "listing-exists" => {}
            Err(e) => return Err(e),
        }
        Ok(PublishResponse { photo_id })
    }

    pub fn buy(&self, token: &str, req: BuyRequest) -> Result<BuyResponse, ApiError> {
        let (identity, client) = self.session(token)?;
        Self::require_role(&identity, Role::Customer)?;
        let photo_id = parse_photo_id(&req.photo_id)?;
        let mut conflicted = false;
        let mut last = None;
        for _ in 0..=self.cfg.buy_retries {
            match self.invoke(&client, &ChannelId::trades(), "buy", buy_args(&identity.name, &photo_id, req.tier)) {
                Ok(done) => {
                    let trade = TradeRecord::from_canonical(&done.response)
                        .map_err(|e| ApiError::internal(e.to_string()))?;
                    let balance = self.balance_of(&identity, &identity.name)?;
                    return Ok(BuyResponse {
                        trade_id: trade.trade_id,
                        photo_id,
                        tier: trade.tier,
                        price: trade.price,
                        balance,
                    });
                }
                Err(e) if e.code == "mvcc-conflict" => {
                    conflicted = true;
                    last = Some(e);
                }
                // The funds this buy was counting on went to the purchase
                // that beat it.
                Err(e) if conflicted && e.code == "insufficient-funds" => {
                    return Err(ApiError::new(409, "conflict", format!("lost a concurrent purchase: {}", e.message)));
                }
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap_or_else(|| ApiError::new(409, "mvcc-conflict", "conflict")))
    }

    fn balance_of(&self, reader: &Identity, owner: &str) -> Result<u64, ApiError> {
        let raw = self.query(reader, &ChannelId::trades(), "balance", balance_args(owner))?;
        Ok(decode_balance(&raw)?)
    }

    pub fn download(&self, token: &str, photo_id: &str) -> Result<Download, ApiError> {
        let (identity, _) = self.session(token)?;
        let id = parse_photo_id(photo_id)?;
        let photo = self
            .photo(&id)?
            .ok_or_else(|| ApiError::from(ChaincodeError::UnknownPhoto(id.to_hex())))?;
        if photo.owner != identity.name {
            let raw = self.query(
                &self.admin.identity,
                &ChannelId::trades(),
                "has_grant",
                has_grant_args(&identity.name, &id),
            )?;
            if raw != [1] {
                return Err(ApiError::new(403, "no-grant", format!("{} has not bought this photo", identity.name)));
            }
        }
        let bytes = self
            .blobs
            .get(&photo.blob_ref)
            .map_err(|e| ApiError::internal(format!("blob store: {e}")))?
            .ok_or_else(|| ApiError::internal("blob missing from store"))?;
        let content_type = ImageFormat::sniff(&bytes).map_or("application/octet-stream", ImageFormat::mime);
        Ok(Download { bytes, content_type })
    }

    pub fn mint(&self, token: &str, req: MintRequest) -> Result<MintResponse, ApiError> {
        let (identity, client) = self.session(token)?;
        Self::require_role(&identity, Role::Admin)?;
        if req.amount == 0 {
            return Err(ChaincodeError::BadAmount.into());
        }
        if self.account(&req.recipient)?.is_none() {
            return Err(ApiError::new(404, "unknown-account", format!("no account {:?}", req.recipient)));
        }
        let done = self.invoke(&client, &ChannelId::trades(), "mint", mint_args(&req.recipient, req.amount))?;
        Ok(MintResponse {
            recipient: req.recipient,
            balance: decode_amount(&done.response)?,
        })
    }

    pub fn wallet(&self, token: &str) -> Result<WalletResponse, ApiError> {
        let (identity, _) = self.session(token)?;
        let balance = self.balance_of(&self.admin.identity, &identity.name)?;
        Ok(WalletResponse {
            owner: identity.name,
            balance,
        })
    }

    pub fn subscribe(&self, token: &str, req: SubscribeRequest) -> Result<SubscriptionView, ApiError> {
        let (identity, _) = self.session(token)?;
        let whitelist = self.whitelist()?;
        let net = self.net.lock();
        let photos = net.anchor_ledger(&ChannelId::photos())?;
        let sub = self
            .subs
            .subscribe(net.msp(), &identity, &req.topic, photos, whitelist.as_ref())?;
        Ok(sub.into())
    }

    pub fn subscriptions(&self, token: &str) -> Result<SubscriptionList, ApiError> {
        let (identity, _) = self.session(token)?;
        Ok(SubscriptionList {
            subscriptions: self.subs.list(identity.id).into_iter().map(Into::into).collect(),
        })
    }

    pub fn poll(&self, token: &str, topic: &str, cursor: Option<u64>) -> Result<PollResponse, ApiError> {
        let (identity, _) = self.session(token)?;
        let net = self.net.lock();
        let photos = net.anchor_ledger(&ChannelId::photos())?;
        let (events, sub) = self.subs.poll(identity.id, topic, photos, cursor)?;
        Ok(PollResponse {
            topic: sub.topic.as_str().to_string(),
            events,
            cursor: sub.cursor,
        })
    }
}

impl Drop for Gateway {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
    }
}
