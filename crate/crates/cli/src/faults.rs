//! Fault plans written by `inject-fault` and applied when a network comes
//! up from the same data directory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use hyperpubsub_core::ordering::{NodeAddr, Partition};
use hyperpubsub_core::{FaultAction, Network};

pub const FAULTS_FILE: &str = "faults.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FaultSpec {
    /// Random message loss during `[start, end)`.
    Drop { probability: f64, start: u64, end: u64 },
    /// `nodes` only reach each other during `[start, end)`.
    Partition { nodes: BTreeSet<NodeAddr>, start: u64, end: u64 },
    /// `node` is down from `start` until `end`, or for good.
    Crash { node: NodeAddr, start: u64, end: Option<u64> },
}

impl FaultSpec {
    pub fn validate(&self) -> anyhow::Result<()> {
        match self {
            FaultSpec::Drop { probability, start, end } => {
                if !(0.0..1.0).contains(probability) {
                    bail!("drop probability {probability} not in [0, 1)");
                }
                if start >= end {
                    bail!("empty window {start}..{end}");
                }
            }
            FaultSpec::Partition { nodes, start, end } => {
                if nodes.is_empty() {
                    bail!("partition needs at least one node");
                }
                if start >= end {
                    bail!("empty window {start}..{end}");
                }
            }
            FaultSpec::Crash { start, end, .. } => {
                if end.is_some_and(|e| e <= *start) {
                    bail!("restart must come after the crash");
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultPlan {
    pub faults: Vec<FaultSpec>,
}

impl FaultPlan {
    pub fn path_in(data_dir: &Path) -> PathBuf {
        data_dir.join(FAULTS_FILE)
    }

    /// Missing file means no faults.
    pub fn load(data_dir: &Path) -> anyhow::Result<Self> {
        let path = Self::path_in(data_dir);
        if !path.exists() {
            return Ok(FaultPlan::default());
        }
        let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
        let plan: FaultPlan = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        for f in &plan.faults {
            f.validate()?;
        }
        Ok(plan)
    }

    pub fn save(&self, data_dir: &Path) -> anyhow::Result<()> {
        std::fs::create_dir_all(data_dir)?;
        let path = Self::path_in(data_dir);
        let tmp = path.with_extension("tmp");
        std::fs::write(&tmp, serde_json::to_string_pretty(self)?)?;
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }

    /// Schedules every fault on `net`. Ticks are absolute.
    pub fn apply(&self, net: &mut Network) -> anyhow::Result<()> {
        let base_drop = net.config().simnet.drop_probability;
        for f in &self.faults {
            f.validate()?;
            match f {
                FaultSpec::Drop { probability, start, end } => {
                    net.schedule(*start, FaultAction::DropRate { probability: *probability })?;
                    net.schedule(*end, FaultAction::DropRate { probability: base_drop })?;
                }
                FaultSpec::Partition { nodes, start, end } => net.add_partition(Partition {
                    start: *start,
                    end: *end,
                    nodes: nodes.clone(),
                })?,
                FaultSpec::Crash { node, start, end } => {
                    net.schedule(*start, FaultAction::Crash { node: *node })?;
                    if let Some(e) = end {
                        net.schedule(*e, FaultAction::Restart { node: *node })?;
                    }
                }
            }
        }
        Ok(())
    }
}
