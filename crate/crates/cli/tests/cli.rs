use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hyperpubsub_cli::config::CliConfig;
use hyperpubsub_cli::faults::FaultPlan;
use hyperpubsub_cli::inspect;
use hyperpubsub_cli::scenario::{self, Report};
use hyperpubsub_core::ChannelId;

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hyperpubsub")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run(name: &str, seed: u64) -> Report {
    let cfg = CliConfig::default().with_overrides(Some(seed), None);
    scenario::run_file(&cfg, &FaultPlan::default(), &scenarios().join(name)).unwrap()
}

#[test]
fn demo_scenario_passes_and_is_deterministic() {
    let a = run("demo.toml", 11);
    assert!(a.passed(), "{a}");
    let b = run("demo.toml", 11);
    assert_eq!(a, b);
}

#[test]
fn underfunded_buy_is_refused() {
    let r = run("underfunded.toml", 12);
    assert!(r.passed(), "{r}");
    assert!(r.steps.iter().any(|s| s.detail.contains("insufficient-funds")));
}

#[test]
fn buy_goes_through_after_leader_partition_heals() {
    let r = run("leader-partition.toml", 13);
    assert!(r.passed(), "{r}");
}

#[test]
fn failing_step_is_reported_and_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wrong.toml");
    std::fs::write(
        &path,
        r#"
name = "wrong"
[[step]]
action = "register"
actor = "bob"
role = "customer"
[[step]]
action = "assert-state"
balances = { bob = 5 }
"#,
    )
    .unwrap();
    let out = bin(&["run-scenario", path.to_str().unwrap(), "--seed", "1"]);
    assert!(!out.status.success());
    let text = stdout(&out);
    assert!(text.contains("FAIL wrong at step 2"), "{text}");
    assert!(text.contains("bob has 0, expected 5"), "{text}");
}

#[test]
fn net_up_is_reproducible() {
    let a = bin(&["net-up", "--seed", "5", "--ticks", "300"]);
    let b = bin(&["net-up", "--seed", "5", "--ticks", "300"]);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    let text = stdout(&a);
    assert!(text.contains("peers 6 orderers 3"));
    assert!(text.contains("E3 height 1 genesis"));
    assert!(!text.contains("leader none"));
}

#[test]
fn net_up_rejects_bad_config() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "[network]\norderers = 0\n").unwrap();
    let out = bin(&["net-up", "--config", path.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad config"));
}

#[test]
fn inspect_prints_a_consistent_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let demo = scenarios().join("demo.toml");
    assert!(bin(&["run-scenario", demo.to_str().unwrap(), "--data-dir", d, "--seed", "2"]).status.success());
    let blocks = inspect::load_chain(dir.path(), 0, &ChannelId::trades()).unwrap();
    let h = blocks.len() as u64;
    assert!(h > 1);
    let out = bin(&["inspect", "--data-dir", d, "--channel", "E3", "--from", "0", "--to", &h.to_string()]);
    assert!(out.status.success());
    let lines: Vec<serde_json::Value> = stdout(&out).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len() as u64, h);
    for (i, l) in lines.iter().enumerate() {
        assert_eq!(l["number"], i as u64);
        assert_eq!(l["hash"], blocks[i].hash().short());
        assert!(l["txs"].is_u64() && l["invalid"].is_u64() && l["flags"].is_array());
    }
    let bad = bin(&["inspect", "--data-dir", d, "--channel", "E9"]);
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unknown channel"));
}

fn heights(dir: &Path) -> Vec<u64> {
    inspect::peer_heights(dir, &ChannelId::trades())
        .unwrap()
        .into_iter()
        .map(|(_, h, _)| h)
        .collect()
}

#[test]
fn injected_partition_diverges_then_reconverges() {
    let demo = scenarios().join("demo.toml");
    let demo = demo.to_str().unwrap();

    // Cut off for the whole run: peer3 stays behind.
    let cut = tempfile::tempdir().unwrap();
    let d = cut.path().to_str().unwrap();
    let o = bin(&["inject-fault", "partition", "--data-dir", d, "--target", "peer3", "--start", "0", "--end", "1000000"]);
    assert!(o.status.success());
    bin(&["run-scenario", demo, "--data-dir", d, "--seed", "4"]);
    let h = heights(cut.path());
    assert!(h[3] < h[0], "{h:?}");

    // Healed mid-run: every peer ends on the same chain.
    let healed = tempfile::tempdir().unwrap();
    let d = healed.path().to_str().unwrap();
    bin(&["inject-fault", "partition", "--data-dir", d, "--target", "peer3", "--start", "0", "--end", "1500"]);
    let out = bin(&["run-scenario", demo, "--data-dir", d, "--seed", "4"]);
    assert!(out.status.success(), "{}", stdout(&out));
    let h = heights(healed.path());
    assert!(h.iter().all(|x| *x == h[0]) && h[0] > 1, "{h:?}");
}

#[test]
fn inject_fault_validates_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    assert!(!bin(&["inject-fault", "crash", "--data-dir", d, "--target", "peer1,peer2", "--start", "5"]).status.success());
    assert!(!bin(&["inject-fault", "drop", "--data-dir", d, "--start", "5", "--end", "9"]).status.success());
    assert!(!bin(&["inject-fault", "partition", "--data-dir", d, "--target", "node7", "--start", "0", "--end", "9"]).status.success());
    assert!(bin(&["inject-fault", "crash", "--data-dir", d, "--target", "orderer1", "--start", "5"]).status.success());
    assert!(bin(&["inject-fault", "drop", "--data-dir", d, "--probability", "0.05", "--start", "0", "--end", "900"]).status.success());
    assert_eq!(FaultPlan::load(dir.path()).unwrap().faults.len(), 2);
}
