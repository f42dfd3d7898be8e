use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hyperpubsub_cli::config::CliConfig;
use hyperpubsub_cli::faults::{FaultPlan, FaultSpec};
use hyperpubsub_cli::inspect;
use hyperpubsub_cli::scenario;
use hyperpubsub_core::ordering::NodeAddr;
use hyperpubsub_core::Network;
use hyperpubsub_gateway::{serve, Gateway, GatewayConfig};

#[derive(Parser)]
#[command(name = "hyperpubsub", version, about = "Photo trading pub/sub network on a permissioned chain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct NetArgs {
    /// TOML config; defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the simulation seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Where peer chains, the MSP registry, blobs and fault plans live.
    #[arg(long)]
    data_dir: Option<PathBuf>,
}

impl NetArgs {
    fn load(&self) -> anyhow::Result<(CliConfig, FaultPlan)> {
        let cfg = CliConfig::load(self.config.as_deref())?.with_overrides(self.seed, self.data_dir.clone());
        cfg.validate()?;
        let plan = match &cfg.network.data_dir {
            Some(d) => FaultPlan::load(d)?,
            None => FaultPlan::default(),
        };
        Ok((cfg, plan))
    }
}

#[derive(Subcommand)]
enum Command {
    /// Bring the network up, elect a leader and report its shape.
    NetUp {
        #[command(flatten)]
        net: NetArgs,
        /// Extra ticks to run after the election.
        #[arg(long, default_value_t = 0)]
        ticks: u64,
    },
    /// Run a scenario file; exits non-zero when a step fails.
    RunScenario {
        file: PathBuf,
        #[command(flatten)]
        net: NetArgs,
    },
    /// Print block summaries for one peer's chain.
    Inspect {
        #[arg(long)]
        data_dir: PathBuf,
        #[arg(long)]
        channel: String,
        #[arg(long, default_value_t = 0)]
        from: u64,
        /// Exclusive; defaults to the chain height.
        #[arg(long)]
        to: Option<u64>,
        #[arg(long, default_value_t = 0)]
        peer: usize,
        /// Print height and tip per peer instead of block summaries.
        #[arg(long)]
        heights: bool,
    },
    /// Add a fault to the plan applied by later runs on the data directory.
    InjectFault {
        kind: FaultKind,
        #[arg(long)]
        data_dir: PathBuf,
        /// Comma-separated nodes (ordererN, peerN). Not used by `drop`.
        #[arg(long, value_delimiter = ',')]
        target: Vec<NodeAddr>,
        #[arg(long)]
        start: u64,
        /// Exclusive end tick; a crash without one is permanent.
        #[arg(long)]
        end: Option<u64>,
        #[arg(long)]
        probability: Option<f64>,
        /// Drop the existing plan first.
        #[arg(long)]
        reset: bool,
    },
    /// Run the HTTP gateway over a live network.
    Serve {
        #[command(flatten)]
        net: NetArgs,
        #[arg(long)]
        listen: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultKind {
    Drop,
    Partition,
    Crash,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cmd: Command) -> anyhow::Result<bool> {
    match cmd {
        Command::NetUp { net, ticks } => net_up(&net, ticks),
        Command::RunScenario { file, net } => {
            let (cfg, plan) = net.load()?;
            let report = scenario::run_file(&cfg, &plan, &file)?;
            println!("{report}");
            Ok(report.passed())
        }
        Command::Inspect {
            data_dir,
            channel,
            from,
            to,
            peer,
            heights,
        } => {
            let ch = inspect::parse_channel(&channel)?;
            if heights {
                for (p, h, tip) in inspect::peer_heights(&data_dir, &ch)? {
                    println!("peer{p} {ch} height {h} tip {tip}");
                }
            } else {
                let blocks = inspect::load_chain(&data_dir, peer, &ch)?;
                for s in inspect::summaries(&blocks, from, to)? {
                    println!("{}", s.to_line());
                }
            }
            Ok(true)
        }
        Command::InjectFault {
            kind,
            data_dir,
            target,
            start,
            end,
            probability,
            reset,
        } => {
            let spec = fault_spec(kind, target, start, end, probability)?;
            spec.validate()?;
            let mut plan = if reset { FaultPlan::default() } else { FaultPlan::load(&data_dir)? };
            plan.faults.push(spec);
            plan.save(&data_dir)?;
            println!("{} fault(s) planned in {}", plan.faults.len(), FaultPlan::path_in(&data_dir).display());
            Ok(true)
        }
        Command::Serve { net, listen } => {
            let (mut cfg, plan) = net.load()?;
            if let Some(l) = listen {
                cfg.gateway.listen = l;
            }
            serve_gateway(cfg, plan)?;
            Ok(true)
        }
    }
}

fn fault_spec(
    kind: FaultKind,
    target: Vec<NodeAddr>,
    start: u64,
    end: Option<u64>,
    probability: Option<f64>,
) -> anyhow::Result<FaultSpec> {
    let need_end = || end.context("--end is required for this fault");
    Ok(match kind {
        FaultKind::Drop => FaultSpec::Drop {
            probability: probability.context("--probability is required for drop")?,
            start,
            end: need_end()?,
        },
        FaultKind::Partition => {
            if target.is_empty() {
                bail!("--target is required for partition");
            }
            FaultSpec::Partition {
                nodes: target.into_iter().collect(),
                start,
                end: need_end()?,
            }
        }
        FaultKind::Crash => match target.as_slice() {
            [node] => FaultSpec::Crash { node: *node, start, end },
            _ => bail!("crash takes exactly one --target"),
        },
    })
}

fn net_up(args: &NetArgs, ticks: u64) -> anyhow::Result<bool> {
    let (cfg, plan) = args.load()?;
    let mut net = Network::new(cfg.network.clone())?;
    plan.apply(&mut net)?;
    let leader = net.elect_leader(10_000);
    net.run(ticks);
    net.save_msp()?;
    println!(
        "peers {} orderers {} seed {}",
        net.peers().len(),
        net.orderers().len(),
        cfg.network.simnet.seed
    );
    match net.leader().or(leader) {
        Some(l) => println!("leader orderer{l}"),
        None => println!("leader none"),
    }
    for ch in net.channels() {
        let ledger = net.anchor_ledger(ch)?;
        let view = ledger.view();
        let genesis = view.blocks().first().map(|b| b.hash().to_hex()).unwrap_or_default();
        println!("{ch} height {} genesis {genesis}", view.height());
    }
    println!("tick {} trace {}", net.now(), net.trace_digest());
    if let Some(d) = &cfg.network.data_dir {
        println!("data {}", d.display());
    }
    Ok(net.leader().is_some())
}

fn serve_gateway(cfg: CliConfig, plan: FaultPlan) -> anyhow::Result<()> {
    let mut net = Network::new(cfg.network.clone())?;
    plan.apply(&mut net)?;
    let blob_dir = match cfg.blob_dir() {
        Some(d) => d,
        None => default_blob_dir(&cfg.gateway),
    };
    let gcfg = GatewayConfig {
        blob_dir,
        ..cfg.gateway.clone()
    };
    let listen = gcfg.listen.clone();
    let gw = Arc::new(Gateway::new(gcfg, net)?);
    gw.network().save_msp()?;
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen.as_str())
            .await
            .with_context(|| format!("binding {listen}"))?;
        eprintln!("gateway listening on {}", listener.local_addr()?);
        serve(gw, listener).await?;
        Ok(())
    })
}

fn default_blob_dir(g: &GatewayConfig) -> PathBuf {
    if g.blob_dir.is_absolute() {
        g.blob_dir.clone()
    } else {
        Path::new(".").join(&g.blob_dir)
    }
}
