//! Operator config file (TOML): network shape plus gateway settings.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use hyperpubsub_core::NetworkConfig;
use hyperpubsub_gateway::GatewayConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub network: NetworkConfig,
    pub gateway: GatewayConfig,
}

impl CliConfig {
    /// Reads `path`, or the defaults when no file is given.
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in {}", p.display()))?
            }
            None => CliConfig::default(),
        };
        Ok(cfg)
    }

    pub fn parse(text: &str) -> anyhow::Result<Self> {
        let cfg: CliConfig = toml::from_str(text).context("bad config")?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        self.network.validate()?;
        if self.gateway.admin_name.is_empty() || self.gateway.admin_secret.is_empty() {
            bail!("bad config: gateway admin name and secret must be set");
        }
        if self.gateway.ticks_per_ms == 0 {
            bail!("bad config: gateway ticks_per_ms must be at least 1");
        }
        Ok(())
    }

    pub fn with_overrides(mut self, seed: Option<u64>, data_dir: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.network.simnet.seed = s;
        }
        if data_dir.is_some() {
            self.network.data_dir = data_dir;
        }
        self
    }

    /// Blob directory, placed under the data directory when relative.
    pub fn blob_dir(&self) -> Option<PathBuf> {
        let b = &self.gateway.blob_dir;
        match &self.network.data_dir {
            Some(d) if b.is_relative() => Some(d.join(b)),
            Some(_) => Some(b.clone()),
            None => None,
        }
    }
}
