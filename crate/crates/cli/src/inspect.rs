//! Chain inspector over the block files a run leaves in its data directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};

use hyperpubsub_core::ledger::{read_block_file, verify_blocks, BlockSummary};
use hyperpubsub_core::{Block, ChannelId};

pub fn block_file(data_dir: &Path, peer: usize, channel: &ChannelId) -> PathBuf {
    data_dir.join(format!("peer{peer}")).join(format!("{channel}.blocks"))
}

/// Accepts `E1`..`E4` or the descriptive names.
pub fn parse_channel(name: &str) -> anyhow::Result<ChannelId> {
    let ch = match name.to_ascii_lowercase().as_str() {
        "e1" | "clients" => ChannelId::clients(),
        "e2" | "photos" => ChannelId::photos(),
        "e3" | "trades" => ChannelId::trades(),
        "e4" | "admin" => ChannelId::admin(),
        _ => bail!("unknown channel {name:?} (want E1, E2, E3 or E4)"),
    };
    Ok(ch)
}

/// Loads and verifies one peer's chain.
pub fn load_chain(data_dir: &Path, peer: usize, channel: &ChannelId) -> anyhow::Result<Vec<Block>> {
    let path = block_file(data_dir, peer, channel);
    if !path.exists() {
        bail!("no chain for {channel} at {}", path.display());
    }
    let blocks = read_block_file(&path).with_context(|| format!("reading {}", path.display()))?;
    verify_blocks(channel, &blocks).with_context(|| format!("{} is inconsistent", path.display()))?;
    Ok(blocks)
}

/// Summaries for blocks `from..to` (to exclusive, default the height).
pub fn summaries(blocks: &[Block], from: u64, to: Option<u64>) -> anyhow::Result<Vec<BlockSummary>> {
    let height = blocks.len() as u64;
    let to = to.unwrap_or(height);
    if from > to || to > height {
        bail!("range {from}..{to} outside chain of height {height}");
    }
    Ok(blocks[from as usize..to as usize].iter().map(BlockSummary::of).collect())
}

/// Height and tip of `channel` on every peer directory present.
pub fn peer_heights(data_dir: &Path, channel: &ChannelId) -> anyhow::Result<Vec<(usize, u64, String)>> {
    let mut out = Vec::new();
    for peer in 0.. {
        if !data_dir.join(format!("peer{peer}")).is_dir() {
            break;
        }
        let blocks = load_chain(data_dir, peer, channel)?;
        let tip = blocks.last().map(|b| b.hash().short()).unwrap_or_default();
        out.push((peer, blocks.len() as u64, tip));
    }
    if out.is_empty() {
        bail!("no peer chains under {}", data_dir.display());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn channel_names() {
        assert_eq!(parse_channel("E3").unwrap(), ChannelId::trades());
        assert_eq!(parse_channel("photos").unwrap(), ChannelId::photos());
        assert!(parse_channel("E9").is_err());
    }

    #[test]
    fn range_checks() {
        let blocks = vec![Block::genesis()];
        assert_eq!(summaries(&blocks, 0, None).unwrap().len(), 1);
        assert!(summaries(&blocks, 0, Some(2)).is_err());
        assert!(summaries(&blocks, 1, Some(0)).is_err());
        assert!(summaries(&blocks, 1, None).unwrap().is_empty());
    }
}
