//! Scripted scenarios (TOML, one `[[step]]` per action) run in-process
//! against the gateway service over the simulated network.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context};
use serde::{Deserialize, Serialize};

use hyperpubsub_core::chaincode::trades::{balance_args, decode_balance};
use hyperpubsub_core::chaincode::{PriceTier, Prices};
use hyperpubsub_core::codec::Encoder;
use hyperpubsub_core::ordering::NodeAddr;
use hyperpubsub_core::{ChannelId, Hash256, Network};
use hyperpubsub_gateway::api::*;
use hyperpubsub_gateway::{ApiError, Gateway, GatewayConfig, Upload};

use crate::config::CliConfig;
use crate::faults::FaultPlan;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(rename = "step")]
    pub steps: Vec<Step>,
}

/// `expect_status` turns a step into a negative check: the operation must
/// fail with exactly that HTTP status.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "kebab-case")]
pub enum Step {
    Register {
        actor: String,
        role: String,
        secret: Option<String>,
        #[serde(default)]
        profile: BTreeMap<String, String>,
        expect_status: Option<u16>,
    },
    Login {
        actor: String,
        secret: Option<String>,
        expect_status: Option<u16>,
    },
    Mint {
        to: String,
        amount: u64,
        actor: Option<String>,
        expect_status: Option<u16>,
    },
    Publish {
        actor: String,
        /// Label later steps use to refer to the photo.
        photo: String,
        title: Option<String>,
        categories: Vec<String>,
        prices: Prices,
        /// Image file relative to the scenario; synthesized from the label
        /// when absent.
        image: Option<PathBuf>,
        expect_status: Option<u16>,
    },
    Subscribe {
        actor: String,
        topic: String,
        expect_status: Option<u16>,
    },
    Buy {
        actor: String,
        photo: String,
        tier: PriceTier,
        expect_status: Option<u16>,
    },
    Poll {
        actor: String,
        topic: String,
        /// Photo labels the poll must return, in order.
        expect: Option<Vec<String>>,
        expect_status: Option<u16>,
    },
    Download {
        actor: String,
        photo: String,
        expect_status: Option<u16>,
    },
    AssertState {
        #[serde(default)]
        balances: BTreeMap<String, u64>,
        /// Every live peer holds the orderers' chain on every channel.
        #[serde(default)]
        converged: bool,
    },
    /// Nodes are `ordererN`, `peerN` or `leader`.
    Partition { nodes: Vec<String>, ticks: u64 },
    Heal,
    CrashNode { node: String },
    RestartNode { node: String },
    AdvanceTicks { ticks: u64 },
}

impl Step {
    pub fn label(&self) -> String {
        match self {
            Step::Register { actor, role, .. } => format!("register {actor} as {role}"),
            Step::Login { actor, .. } => format!("login {actor}"),
            Step::Mint { to, amount, .. } => format!("mint {amount} to {to}"),
            Step::Publish { actor, photo, .. } => format!("{actor} publishes {photo}"),
            Step::Subscribe { actor, topic, .. } => format!("{actor} subscribes {topic}"),
            Step::Buy { actor, photo, tier, .. } => format!("{actor} buys {photo} ({tier})"),
            Step::Poll { actor, topic, .. } => format!("{actor} polls {topic}"),
            Step::Download { actor, photo, .. } => format!("{actor} downloads {photo}"),
            Step::AssertState { .. } => "assert state".to_string(),
            Step::Partition { nodes, ticks } => format!("partition {} for {ticks} ticks", nodes.join(",")),
            Step::Heal => "heal".to_string(),
            Step::CrashNode { node } => format!("crash {node}"),
            Step::RestartNode { node } => format!("restart {node}"),
            Step::AdvanceTicks { ticks } => format!("advance {ticks} ticks"),
        }
    }
}

impl Scenario {
    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let s: Scenario = toml::from_str(text).context("bad scenario")?;
        s.check_actors()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Steps may only name actors and photos introduced by earlier steps.
    fn check_actors(&self) -> anyhow::Result<()> {
        let mut actors: BTreeSet<&str> = BTreeSet::from(["admin"]);
        let mut photos: BTreeSet<&str> = BTreeSet::new();
        for (i, step) in self.steps.iter().enumerate() {
            let n = i + 1;
            let need = |a: &str, set: &BTreeSet<&str>, what: &str| {
                if set.contains(a) {
                    Ok(())
                } else {
                    Err(anyhow!("step {n}: unknown {what} {a:?}"))
                }
            };
            match step {
                Step::Register { actor, .. } => {
                    actors.insert(actor);
                }
                Step::Login { actor, .. } | Step::Subscribe { actor, .. } | Step::Poll { actor, .. } => {
                    need(actor, &actors, "actor")?
                }
                Step::Mint { actor, .. } => need(actor.as_deref().unwrap_or("admin"), &actors, "actor")?,
                Step::Publish { actor, photo, .. } => {
                    need(actor, &actors, "actor")?;
                    photos.insert(photo);
                }
                Step::Buy { actor, photo, .. } | Step::Download { actor, photo, .. } => {
                    need(actor, &actors, "actor")?;
                    need(photo, &photos, "photo")?;
                }
                _ => {}
            }
            if let Step::Poll { expect: Some(labels), .. } = step {
                for l in labels {
                    need(l, &photos, "photo")?;
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct StepReport {
    pub index: usize,
    pub label: String,
    pub ok: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub steps: Vec<StepReport>,
    pub ticks: u64,
    /// Digest over every channel's height, tip and world state at the
    /// anchor peer.
    pub state_digest: Hash256,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.steps.iter().all(|s| s.ok)
    }

    pub fn failure(&self) -> Option<&StepReport> {
        self.steps.iter().find(|s| !s.ok)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in &self.steps {
            let mark = if s.ok { "ok  " } else { "FAIL" };
            writeln!(f, "{mark} {:>3} {}: {}", s.index, s.label, s.detail)?;
        }
        match self.failure() {
            None => writeln!(f, "PASS {} ({} ticks)", self.scenario, self.ticks)?,
            Some(s) => writeln!(f, "FAIL {} at step {} ({})", self.scenario, s.index, s.label)?,
        }
        write!(f, "state digest {}", self.state_digest)
    }
}

/// Photographer-side stand-in for an image file: PNG magic plus bytes
/// derived from the label.
pub fn synth_image(label: &str) -> Vec<u8> {
    let mut out = b"\x89PNG\r\n\x1a\n".to_vec();
    let mut h = Hash256::digest(label.as_bytes());
    while out.len() < 4096 {
        out.extend_from_slice(&h.0);
        h = Hash256::digest(&h.0);
    }
    out
}

/// Digest of the committed state of every channel at the anchor peer.
pub fn state_digest(net: &Network) -> anyhow::Result<Hash256> {
    let mut enc = Encoder::new();
    for ch in net.channels() {
        let ledger = net.anchor_ledger(ch)?;
        let view = ledger.view();
        enc.str(ch.as_str()).u64(view.height());
        enc.value(&view.blocks().last().map_or(Hash256::ZERO, |b| b.hash()));
        enc.value(&view.state().digest());
    }
    Ok(Hash256::digest(&enc.finish()))
}

pub struct Runner {
    gw: Gateway,
    base_dir: PathBuf,
    admin_secret: String,
    tokens: HashMap<String, String>,
    photos: HashMap<String, Hash256>,
    images: HashMap<String, Vec<u8>>,
    _tmp: Option<tempfile::TempDir>,
}

impl Runner {
    /// Brings up the network from `cfg`, applies `plan`, and fronts it with
    /// an in-process gateway. Blobs go to a temporary directory unless the
    /// config names a data directory.
    pub fn new(cfg: &CliConfig, plan: &FaultPlan, base_dir: &Path) -> anyhow::Result<Self> {
        let mut net = Network::new(cfg.network.clone())?;
        plan.apply(&mut net)?;
        let (blob_dir, tmp) = match cfg.blob_dir() {
            Some(d) => (d, None),
            None => {
                let t = tempfile::tempdir()?;
                (t.path().join("blobs"), Some(t))
            }
        };
        let gcfg = GatewayConfig {
            blob_dir,
            ..cfg.gateway.clone()
        };
        let gw = Gateway::new(gcfg, net)?;
        gw.network().save_msp()?;
        Ok(Runner {
            gw,
            base_dir: base_dir.to_path_buf(),
            admin_secret: cfg.gateway.admin_secret.clone(),
            tokens: HashMap::new(),
            photos: HashMap::new(),
            images: HashMap::new(),
            _tmp: tmp,
        })
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gw
    }

    pub fn run(&mut self, scenario: &Scenario) -> anyhow::Result<Report> {
        let mut steps = Vec::new();
        for (i, step) in scenario.steps.iter().enumerate() {
            let (ok, detail) = match self.step(step) {
                Ok(d) => (true, d),
                Err(e) => (false, format!("{e:#}")),
            };
            steps.push(StepReport {
                index: i + 1,
                label: step.label(),
                ok,
                detail,
            });
            if !ok {
                break;
            }
        }
        let net = self.gw.network();
        Ok(Report {
            scenario: scenario.name.clone(),
            steps,
            ticks: net.now(),
            state_digest: state_digest(&net)?,
        })
    }

    fn token(&mut self, actor: &str) -> anyhow::Result<String> {
        if let Some(t) = self.tokens.get(actor) {
            return Ok(t.clone());
        }
        if actor == self.gw.config().admin_name {
            let t = self
                .gw
                .login(LoginRequest {
                    name: actor.to_string(),
                    secret: self.admin_secret.clone(),
                })?
                .token;
            self.tokens.insert(actor.to_string(), t.clone());
            return Ok(t);
        }
        bail!("{actor} has not logged in")
    }

    fn photo(&self, label: &str) -> anyhow::Result<Hash256> {
        self.photos
            .get(label)
            .copied()
            .ok_or_else(|| anyhow!("photo {label:?} was not published"))
    }

    fn node(&self, name: &str) -> anyhow::Result<NodeAddr> {
        if name == "leader" {
            let l = self.gw.network().leader().ok_or_else(|| anyhow!("no leader to target"))?;
            return Ok(NodeAddr::Orderer(l));
        }
        name.parse().map_err(|e: String| anyhow!(e))
    }

    fn step(&mut self, step: &Step) -> anyhow::Result<String> {
        match step {
            Step::Register {
                actor,
                role,
                secret,
                profile,
                expect_status,
            } => {
                let r = self.gw.register(RegisterRequest {
                    name: actor.clone(),
                    secret: secret.clone().unwrap_or_else(|| default_secret(actor)),
                    role: role.clone(),
                    profile: profile.clone(),
                });
                expect(r, *expect_status, |r| Ok(format!("{} registered", r.name)))
            }
            Step::Login {
                actor,
                secret,
                expect_status,
            } => {
                let r = self.gw.login(LoginRequest {
                    name: actor.clone(),
                    secret: secret.clone().unwrap_or_else(|| {
                        if *actor == self.gw.config().admin_name {
                            self.admin_secret.clone()
                        } else {
                            default_secret(actor)
                        }
                    }),
                });
                let tokens = &mut self.tokens;
                expect(r, *expect_status, |r| {
                    tokens.insert(actor.clone(), r.token);
                    Ok(format!("{} photos listed", r.photos.len()))
                })
            }
            Step::Mint {
                to,
                amount,
                actor,
                expect_status,
            } => {
                let admin_name = self.gw.config().admin_name.clone();
                let token = self.token(actor.as_deref().unwrap_or(&admin_name))?;
                let r = self.gw.mint(
                    &token,
                    MintRequest {
                        recipient: to.clone(),
                        amount: *amount,
                    },
                );
                expect(r, *expect_status, |r| Ok(format!("{} balance {}", r.recipient, r.balance)))
            }
            Step::Publish {
                actor,
                photo,
                title,
                categories,
                prices,
                image,
                expect_status,
            } => {
                let token = self.token(actor)?;
                let bytes = match image {
                    Some(p) => {
                        let path = self.base_dir.join(p);
                        std::fs::read(&path).with_context(|| format!("reading {}", path.display()))?
                    }
                    None => synth_image(photo),
                };
                let r = self.gw.publish(
                    &token,
                    Upload {
                        title: title.clone().unwrap_or_else(|| photo.clone()),
                        categories: categories.clone(),
                        prices: *prices,
                        image: bytes.clone(),
                    },
                );
                let (photos, images) = (&mut self.photos, &mut self.images);
                expect(r, *expect_status, |r| {
                    photos.insert(photo.clone(), r.photo_id);
                    images.insert(photo.clone(), bytes);
                    Ok(format!("photo_id {}", r.photo_id.short()))
                })
            }
            Step::Subscribe {
                actor,
                topic,
                expect_status,
            } => {
                let token = self.token(actor)?;
                let r = self.gw.subscribe(&token, SubscribeRequest { topic: topic.clone() });
                expect(r, *expect_status, |r| Ok(format!("cursor {}", r.cursor)))
            }
            Step::Buy {
                actor,
                photo,
                tier,
                expect_status,
            } => {
                let token = self.token(actor)?;
                let id = self.photo(photo)?;
                let r = self.gw.buy(
                    &token,
                    BuyRequest {
                        photo_id: id.to_hex(),
                        tier: *tier,
                    },
                );
                expect(r, *expect_status, |r| Ok(format!("paid {}, balance {}", r.price, r.balance)))
            }
            Step::Poll {
                actor,
                topic,
                expect: want,
                expect_status,
            } => {
                let token = self.token(actor)?;
                let r = self.gw.poll(&token, topic, None);
                let want: Option<Vec<Hash256>> = want
                    .as_ref()
                    .map(|ls| ls.iter().map(|l| self.photo(l)).collect())
                    .transpose()?;
                expect(r, *expect_status, |r| {
                    let got: Vec<Hash256> = r.events.iter().map(|e| e.photo_id).collect();
                    if let Some(w) = want {
                        if got != w {
                            bail!("poll returned {} events, expected {}", got.len(), w.len());
                        }
                    }
                    Ok(format!("{} events, cursor {}", got.len(), r.cursor))
                })
            }
            Step::Download {
                actor,
                photo,
                expect_status,
            } => {
                let token = self.token(actor)?;
                let id = self.photo(photo)?;
                let r = self.gw.download(&token, &id.to_hex());
                let original = self.images.get(photo).cloned().unwrap_or_default();
                expect(r, *expect_status, |d| {
                    if d.bytes != original {
                        bail!("downloaded bytes differ from the upload");
                    }
                    Ok(format!("{} bytes, identical", d.bytes.len()))
                })
            }
            Step::AssertState { balances, converged } => {
                let mut net = self.gw.network();
                if *converged && !net.settle(20_000) {
                    bail!("peers did not converge");
                }
                let reader = net.peer(0).map(|p| p.identity().clone()).ok_or_else(|| anyhow!("no peers"))?;
                // Peers may read every channel they host.
                let reader = net.msp().get_by_name("admin").unwrap_or(reader);
                for (who, want) in balances {
                    let raw = net.query(&reader, &ChannelId::trades(), "balance", balance_args(who))?;
                    let got = decode_balance(&raw)?;
                    if got != *want {
                        bail!("{who} has {got}, expected {want}");
                    }
                }
                Ok(format!("{} balances match", balances.len()))
            }
            Step::Partition { nodes, ticks } => {
                let set = nodes.iter().map(|n| self.node(n)).collect::<anyhow::Result<BTreeSet<_>>>()?;
                let shown: Vec<String> = set.iter().map(ToString::to_string).collect();
                self.gw.network().partition(set, *ticks)?;
                Ok(format!("isolated {}", shown.join(",")))
            }
            Step::Heal => {
                self.gw.network().heal();
                Ok("healed".into())
            }
            Step::CrashNode { node } => {
                let n = self.node(node)?;
                self.gw.network().crash(n)?;
                Ok(format!("{n} down"))
            }
            Step::RestartNode { node } => {
                let n = self.node(node)?;
                self.gw.network().restart(n)?;
                Ok(format!("{n} up"))
            }
            Step::AdvanceTicks { ticks } => {
                let mut net = self.gw.network();
                net.run(*ticks);
                Ok(format!("now {}", net.now()))
            }
        }
    }
}

fn default_secret(actor: &str) -> String {
    format!("{actor}-secret")
}

fn expect<T>(
    result: Result<T, ApiError>,
    status: Option<u16>,
    on_ok: impl FnOnce(T) -> anyhow::Result<String>,
) -> anyhow::Result<String> {
    match (result, status) {
        (Ok(v), None | Some(200) | Some(201)) => on_ok(v),
        (Ok(_), Some(s)) => bail!("succeeded, expected status {s}"),
        (Err(e), Some(s)) if e.status == s => Ok(format!("rejected as expected: {}", e.code)),
        (Err(e), _) => Err(anyhow!(e)),
    }
}

/// Loads the scenario, runs it under `cfg` and returns the report.
pub fn run_file(cfg: &CliConfig, plan: &FaultPlan, path: &Path) -> anyhow::Result<Report> {
    let scenario = Scenario::load(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    Runner::new(cfg, plan, base)?.run(&scenario)
}
