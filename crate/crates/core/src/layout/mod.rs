//! KV-cache-oriented flash translation layer.
//!
//! Two logical-to-physical mappings share one device: token-indexed pages hold `n`
//! consecutive K (or V) rows of one head, and embedding-indexed pages hold `g` embeddings
//! of K over a stripe of consecutive tokens. K is therefore stored twice.

mod ftl;
pub mod trace;

pub use ftl::{
    FlushIntent, GroupBuffer, KvLayout, LayoutConfig, LayoutSnapshot, PageLookup, PageTarget, WritePolicy, WriteStats,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Physical organization of one flash device.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlashGeometry {
    pub channels: usize,
    pub dies_per_channel: usize,
    pub planes_per_die: usize,
    pub blocks_per_plane: usize,
    pub pages_per_block: usize,
    pub page_size: usize,
}

impl Default for FlashGeometry {
    /// 8 channels of 4 KiB pages, about 2.2 TB. Each "die" is one independently busy
    /// array unit; 32 per channel keeps a 1.4 GB/s channel saturated at a 50 µs page read.
    fn default() -> Self {
        Self {
            channels: 8,
            dies_per_channel: 32,
            planes_per_die: 2,
            blocks_per_plane: 4096,
            pages_per_block: 256,
            page_size: 4096,
        }
    }
}

impl FlashGeometry {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("channels", self.channels),
            ("dies_per_channel", self.dies_per_channel),
            ("planes_per_die", self.planes_per_die),
            ("blocks_per_plane", self.blocks_per_plane),
            ("pages_per_block", self.pages_per_block),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::config(format!("geometry {name} must be >= 1")));
            }
        }
        if !self.page_size.is_power_of_two() {
            return Err(Error::config(format!("page_size {} is not a power of two", self.page_size)));
        }
        Ok(())
    }

    pub fn pages_per_die(&self) -> u64 {
        (self.planes_per_die * self.blocks_per_plane * self.pages_per_block) as u64
    }

    pub fn pages_per_channel(&self) -> u64 {
        self.pages_per_die() * self.dies_per_channel as u64
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.pages_per_channel() * self.channels as u64 * self.page_size as u64
    }

    pub fn block_bytes(&self) -> u64 {
        (self.pages_per_block * self.page_size) as u64
    }

    /// Address of the `slot`-th page appended to `channel`.
    ///
    /// Consecutive slots rotate over dies, so a channel's log is striped across its dies
    /// and every die fills its open block page by page.
    pub fn slot_address(&self, channel: usize, slot: u64) -> Result<PhysicalPageAddress> {
        if channel >= self.channels || slot >= self.pages_per_channel() {
            return Err(Error::capacity(
                "flash capacity",
                format!("channel {channel} has no free page (slot {slot})"),
            ));
        }
        let dies = self.dies_per_channel as u64;
        let die = (slot % dies) as usize;
        let in_die = slot / dies;
        let page = (in_die % self.pages_per_block as u64) as usize;
        let block_seq = in_die / self.pages_per_block as u64;
        let plane = (block_seq % self.planes_per_die as u64) as usize;
        let block = (block_seq / self.planes_per_die as u64) as usize;
        Ok(PhysicalPageAddress {
            channel,
            die,
            plane,
            block,
            page,
        })
    }

    pub fn contains(&self, a: &PhysicalPageAddress) -> bool {
        a.channel < self.channels
            && a.die < self.dies_per_channel
            && a.plane < self.planes_per_die
            && a.block < self.blocks_per_plane
            && a.page < self.pages_per_block
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhysicalPageAddress {
    pub channel: usize,
    pub die: usize,
    pub plane: usize,
    pub block: usize,
    pub page: usize,
}

impl PhysicalPageAddress {
    /// Erase unit containing this page.
    pub fn block_id(&self) -> (usize, usize, usize, usize) {
        (self.channel, self.die, self.plane, self.block)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KvTensor {
    K,
    V,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TokenGroupKey {
    pub layer: usize,
    pub head: usize,
    pub tensor: KvTensor,
    pub group_id: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct EmbeddingStripeKey {
    pub layer: usize,
    pub head: usize,
    pub embedding_group_id: usize,
    pub token_stripe_id: usize,
}

/// Tokens per token-indexed page: `page_size / (d_h · element_bytes)`.
pub fn group_size_tokens(page_size: usize, head_dim: usize, element_bytes: usize) -> Result<usize> {
    let row = head_dim * element_bytes;
    if row == 0 || page_size % row != 0 || page_size < row {
        return Err(Error::config(format!(
            "page size {page_size} is not a multiple of the {row}-byte row"
        )));
    }
    Ok(page_size / row)
}

/// Tokens per embedding-indexed page holding `g` embeddings: `page_size / (g · element_bytes)`.
pub fn embedding_stripe_tokens(page_size: usize, g: usize, element_bytes: usize) -> Result<usize> {
    if g == 0 || element_bytes == 0 {
        return Err(Error::config("embedding group and element size must be >= 1"));
    }
    Ok(page_size / (g * element_bytes))
}

/// Embedding group size for a device serving contexts up to `max_context` tokens.
///
/// 8 for long contexts; otherwise the smallest group whose stripe still covers the
/// context, clamped to [2, 8].
pub fn default_embedding_group(page_size: usize, element_bytes: usize, max_context: usize) -> usize {
    if max_context >= 2048 {
        return 8;
    }
    let g = page_size / (element_bytes * max_context.max(1));
    g.clamp(2, 8)
}

/// Channel of the `ordinal`-th page of a head. Heads start on distinct channels and
/// their pages rotate round-robin from there.
pub fn striped_channel(head_slot: usize, ordinal: usize, channels: usize) -> usize {
    (head_slot % channels + ordinal) % channels
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn group_size_examples() {
        assert_eq!(group_size_tokens(4096, 128, 2).unwrap(), 16);
        assert_eq!(group_size_tokens(16384, 128, 2).unwrap(), 64);
        assert_eq!(group_size_tokens(4096, 64, 2).unwrap(), 32);
        assert!(group_size_tokens(4096, 96, 2).is_err());
    }

    #[test]
    fn stripe_examples() {
        assert_eq!(embedding_stripe_tokens(4096, 1, 2).unwrap(), 2048);
        assert_eq!(embedding_stripe_tokens(4096, 8, 2).unwrap(), 256);
        assert_eq!(embedding_stripe_tokens(4096, 4, 2).unwrap(), 512);
        assert_eq!(embedding_stripe_tokens(4096, 2, 2).unwrap(), 1024);
        assert!(embedding_stripe_tokens(4096, 0, 2).is_err());
        // token 600 with g=4 sits in stripe 1 (tokens 512..1024)
        assert_eq!(600 / embedding_stripe_tokens(4096, 4, 2).unwrap(), 1);
    }

    #[test]
    fn default_group_rule() {
        assert_eq!(default_embedding_group(4096, 2, 4096), 8);
        assert_eq!(default_embedding_group(4096, 2, 1024), 2);
        assert_eq!(default_embedding_group(4096, 2, 256), 8);
        assert_eq!(default_embedding_group(4096, 2, 512), 4);
    }

    #[test]
    fn slot_addresses_stay_in_bounds() {
        let g = FlashGeometry {
            channels: 2,
            dies_per_channel: 3,
            planes_per_die: 2,
            blocks_per_plane: 2,
            pages_per_block: 4,
            page_size: 4096,
        };
        let mut seen = std::collections::BTreeSet::new();
        for slot in 0..g.pages_per_channel() {
            let a = g.slot_address(1, slot).unwrap();
            assert!(g.contains(&a));
            assert!(seen.insert(a));
        }
        assert!(g.slot_address(1, g.pages_per_channel()).is_err());
        assert_eq!(g.slot_address(0, 4).unwrap().die, 1);
    }

    #[test]
    fn geometry_validation() {
        assert!(FlashGeometry::default().validate().is_ok());
        let bad = FlashGeometry {
            page_size: 4000,
            ..FlashGeometry::default()
        };
        assert!(bad.validate().is_err());
        assert!(FlashGeometry::default().capacity_bytes() > 2_000_000_000_000);
    }
}
