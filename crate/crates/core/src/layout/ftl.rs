use std::collections::{BTreeMap, BTreeSet};
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{
    default_embedding_group, embedding_stripe_tokens, group_size_tokens, striped_channel, EmbeddingStripeKey,
    FlashGeometry, KvTensor, PhysicalPageAddress, TokenGroupKey,
};
use crate::attention::{filter_groups, group_expand, Axis, LoadedGroups, SelectionMask};
use crate::attention::STORAGE_ELEMENT_BYTES;
use crate::error::{Error, Result};
use crate::tensor::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum WritePolicy {
    /// Full group pages, programmed a block's worth at a time.
    #[default]
    BlockBatched,
    /// Conventional FTL baseline: every appended K or V row is programmed to its own page.
    /// Keeps only the token-indexed copy.
    PerTokenPage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutConfig {
    pub geometry: FlashGeometry,
    pub layers: usize,
    pub heads_per_layer: usize,
    pub head_dim: usize,
    pub element_bytes: usize,
    pub embedding_group: usize,
    #[serde(default)]
    pub policy: WritePolicy,
}

impl LayoutConfig {
    pub fn new(geometry: FlashGeometry, layers: usize, heads_per_layer: usize, head_dim: usize, max_context: usize) -> Self {
        Self {
            geometry,
            layers,
            heads_per_layer,
            head_dim,
            element_bytes: STORAGE_ELEMENT_BYTES as usize,
            embedding_group: default_embedding_group(geometry.page_size, STORAGE_ELEMENT_BYTES as usize, max_context),
            policy: WritePolicy::BlockBatched,
        }
    }

    pub fn with_policy(mut self, policy: WritePolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        if self.layers == 0 || self.heads_per_layer == 0 || self.head_dim == 0 {
            return Err(Error::config("layers, heads and head_dim must be >= 1"));
        }
        group_size_tokens(self.geometry.page_size, self.head_dim, self.element_bytes)?;
        if self.embedding_group == 0 || self.embedding_group > self.head_dim {
            return Err(Error::config(format!(
                "embedding group {} outside 1..={}",
                self.embedding_group, self.head_dim
            )));
        }
        if embedding_stripe_tokens(self.geometry.page_size, self.embedding_group, self.element_bytes)? == 0 {
            return Err(Error::config("embedding group too wide for one page"));
        }
        Ok(())
    }

    /// Tokens held by one token-indexed page under the active policy.
    pub fn tokens_per_page(&self) -> usize {
        match self.policy {
            WritePolicy::BlockBatched => {
                group_size_tokens(self.geometry.page_size, self.head_dim, self.element_bytes).unwrap_or(1)
            }
            WritePolicy::PerTokenPage => 1,
        }
    }

    pub fn stripe_tokens(&self) -> usize {
        embedding_stripe_tokens(self.geometry.page_size, self.embedding_group, self.element_bytes).unwrap_or(1)
    }

    pub fn embedding_groups(&self) -> usize {
        self.head_dim.div_ceil(self.embedding_group)
    }

    fn head_slot(&self, layer: usize, head: usize) -> usize {
        layer * self.heads_per_layer + head
    }

    fn row_bytes(&self) -> u64 {
        (self.head_dim * self.element_bytes) as u64
    }
}

/// Staging rows for one page, held in device DRAM until full.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupBuffer {
    capacity: usize,
    base: usize,
    rows: Vec<Vec<f64>>,
}

impl GroupBuffer {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity: capacity.max(1),
            base: 0,
            rows: Vec::new(),
        }
    }

    /// Adds a row. Returns the buffered rows and the index of the first one when the
    /// buffer has just filled.
    pub fn push(&mut self, row: Vec<f64>) -> Option<(usize, Vec<Vec<f64>>)> {
        self.rows.push(row);
        if self.rows.len() == self.capacity {
            Some(self.take())
        } else {
            None
        }
    }

    /// Drains whatever is buffered, full or not.
    pub fn take(&mut self) -> (usize, Vec<Vec<f64>>) {
        let base = self.base;
        let rows = std::mem::take(&mut self.rows);
        self.base += rows.len();
        (base, rows)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Index of the first buffered row.
    pub fn base(&self) -> usize {
        self.base
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PageTarget {
    Token(TokenGroupKey),
    Stripe(EmbeddingStripeKey),
}

/// A page ready to be programmed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlushIntent {
    pub target: PageTarget,
    pub logical_bytes: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WriteStats {
    /// Payload bytes programmed, counting both copies of K.
    pub logical_bytes: u64,
    pub physical_bytes: u64,
    pub pages_programmed: u64,
    pub blocks_erased: u64,
    pub block_programs: u64,
    /// K payload counted once.
    pub k_logical_bytes: u64,
    pub k_physical_bytes: u64,
    pub v_logical_bytes: u64,
    pub v_physical_bytes: u64,
}

impl WriteStats {
    /// physical / logical; 1 when nothing was written.
    pub fn write_amplification(&self) -> f64 {
        if self.logical_bytes == 0 {
            1.0
        } else {
            self.physical_bytes as f64 / self.logical_bytes as f64
        }
    }
}

/// Pages touched by a lookup. Groups still in device DRAM cost no flash read.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageLookup {
    pub pages: Vec<PhysicalPageAddress>,
    pub dram_hits: usize,
}

#[derive(Debug, Clone)]
struct HeadState {
    tokens: usize,
    k_group: GroupBuffer,
    v_group: GroupBuffer,
    k_stripe: GroupBuffer,
}

#[derive(Debug, Clone)]
struct PendingPage {
    intent: FlushIntent,
    data: Vec<f64>,
}

/// The device-side KV layout: both mapping tables, staging buffers and the page log.
#[derive(Debug, Clone)]
pub struct KvLayout {
    config: LayoutConfig,
    token_table: BTreeMap<TokenGroupKey, PhysicalPageAddress>,
    stripe_table: BTreeMap<EmbeddingStripeKey, PhysicalPageAddress>,
    heads: BTreeMap<(usize, usize), HeadState>,
    pending: Vec<PendingPage>,
    pages: BTreeMap<PhysicalPageAddress, Vec<f64>>,
    frontier: Vec<u64>,
    programmed: Vec<PhysicalPageAddress>,
    stats: WriteStats,
}

/// Tables and allocation state of a layout. Page contents are not included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutSnapshot {
    pub config: LayoutConfig,
    pub token_table: Vec<(TokenGroupKey, PhysicalPageAddress)>,
    pub stripe_table: Vec<(EmbeddingStripeKey, PhysicalPageAddress)>,
    pub token_counts: Vec<((usize, usize), usize)>,
    pub frontier: Vec<u64>,
    pub stats: WriteStats,
}

impl KvLayout {
    pub fn new(config: LayoutConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            frontier: vec![0; config.geometry.channels],
            config,
            token_table: BTreeMap::new(),
            stripe_table: BTreeMap::new(),
            heads: BTreeMap::new(),
            pending: Vec::new(),
            pages: BTreeMap::new(),
            programmed: Vec::new(),
            stats: WriteStats::default(),
        })
    }

    pub fn config(&self) -> &LayoutConfig {
        &self.config
    }

    pub fn stats(&self) -> WriteStats {
        self.stats
    }

    pub fn token_count(&self, layer: usize, head: usize) -> usize {
        self.heads.get(&(layer, head)).map_or(0, |h| h.tokens)
    }

    pub fn pending_pages(&self) -> usize {
        self.pending.len()
    }

    /// Pages programmed since the last call, in program order.
    pub fn take_programmed(&mut self) -> Vec<PhysicalPageAddress> {
        std::mem::take(&mut self.programmed)
    }

    pub fn token_page(&self, key: &TokenGroupKey) -> Option<PhysicalPageAddress> {
        self.token_table.get(key).copied()
    }

    pub fn stripe_page(&self, key: &EmbeddingStripeKey) -> Option<PhysicalPageAddress> {
        self.stripe_table.get(key).copied()
    }

    /// Bytes of device DRAM the two mapping tables occupy at 8 bytes per entry.
    pub fn mapping_table_bytes(&self) -> u64 {
        8 * (self.token_table.len() + self.stripe_table.len()) as u64
    }

    fn check_head(&self, layer: usize, head: usize) -> Result<()> {
        if layer >= self.config.layers || head >= self.config.heads_per_layer {
            return Err(Error::Mapping(format!("no head ({layer}, {head}) in this layout")));
        }
        Ok(())
    }

    fn channel_for(&self, target: &PageTarget) -> usize {
        let c = self.config.geometry.channels;
        match target {
            PageTarget::Token(k) => striped_channel(self.config.head_slot(k.layer, k.head), k.group_id, c),
            PageTarget::Stripe(k) => striped_channel(
                self.config.head_slot(k.layer, k.head),
                k.embedding_group_id + k.token_stripe_id,
                c,
            ),
        }
    }

    /// Next free page on the channel a target maps to.
    fn allocate(&mut self, target: &PageTarget) -> Result<PhysicalPageAddress> {
        let channel = self.channel_for(target);
        let addr = self.config.geometry.slot_address(channel, self.frontier[channel])?;
        self.frontier[channel] += 1;
        Ok(addr)
    }

    fn program(&mut self, page: PendingPage) -> Result<PhysicalPageAddress> {
        let addr = self.allocate(&page.intent.target)?;
        if self.pages.contains_key(&addr) {
            return Err(Error::Invariant(format!("page {addr:?} programmed twice")));
        }
        let page_bytes = self.config.geometry.page_size as u64;
        let logical = page.intent.logical_bytes;
        self.stats.logical_bytes += logical;
        self.stats.physical_bytes += page_bytes;
        self.stats.pages_programmed += 1;
        match page.intent.target {
            PageTarget::Token(key) => {
                if key.tensor == KvTensor::K {
                    self.stats.k_logical_bytes += logical;
                    self.stats.k_physical_bytes += page_bytes;
                } else {
                    self.stats.v_logical_bytes += logical;
                    self.stats.v_physical_bytes += page_bytes;
                }
                self.token_table.insert(key, addr);
            }
            PageTarget::Stripe(key) => {
                self.stats.k_physical_bytes += page_bytes;
                self.stripe_table.insert(key, addr);
            }
        }
        self.pages.insert(addr, page.data);
        self.programmed.push(addr);
        Ok(addr)
    }

    /// Programs queued pages in whole-block batches, or everything when `drain` is set.
    fn program_pending(&mut self, drain: bool) -> Result<()> {
        let batch = self.config.geometry.pages_per_block;
        while self.pending.len() >= batch || (drain && !self.pending.is_empty()) {
            let n = batch.min(self.pending.len());
            let pages: Vec<PendingPage> = self.pending.drain(..n).collect();
            for p in pages {
                self.program(p)?;
            }
            self.stats.block_programs += 1;
        }
        Ok(())
    }

    fn queue_token_page(&mut self, layer: usize, head: usize, tensor: KvTensor, base: usize, rows: Vec<Vec<f64>>) -> FlushIntent {
        let per_page = self.config.tokens_per_page();
        let intent = FlushIntent {
            target: PageTarget::Token(TokenGroupKey {
                layer,
                head,
                tensor,
                group_id: base / per_page,
            }),
            logical_bytes: rows.len() as u64 * self.config.row_bytes(),
        };
        self.pending.push(PendingPage {
            intent,
            data: rows.concat(),
        });
        intent
    }

    /// Splits a stripe of K rows into one page per embedding group, embedding-major.
    fn queue_stripes(&mut self, layer: usize, head: usize, base: usize, rows: Vec<Vec<f64>>) -> Vec<FlushIntent> {
        let g = self.config.embedding_group;
        let d = self.config.head_dim;
        let stripe = base / self.config.stripe_tokens();
        let mut out = Vec::new();
        for eg in 0..self.config.embedding_groups() {
            let cols = (eg * g)..((eg + 1) * g).min(d);
            let mut data = Vec::with_capacity(cols.len() * rows.len());
            for e in cols.clone() {
                data.extend(rows.iter().map(|r| r[e]));
            }
            let intent = FlushIntent {
                target: PageTarget::Stripe(EmbeddingStripeKey {
                    layer,
                    head,
                    embedding_group_id: eg,
                    token_stripe_id: stripe,
                }),
                logical_bytes: (data.len() * self.config.element_bytes) as u64,
            };
            self.pending.push(PendingPage { intent, data });
            out.push(intent);
        }
        out
    }

    /// Buffers one token's K and V rows for a head. Returns the pages that became full.
    pub fn append_token_kv(&mut self, layer: usize, head: usize, k_row: &[f64], v_row: &[f64]) -> Result<Vec<FlushIntent>> {
        self.check_head(layer, head)?;
        let d = self.config.head_dim;
        for (what, row) in [("k_row", k_row), ("v_row", v_row)] {
            if row.len() != d {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: d,
                    actual: row.len(),
                });
            }
        }
        let per_page = self.config.tokens_per_page();
        let stripe_tokens = self.config.stripe_tokens();
        let state = self.heads.entry((layer, head)).or_insert_with(|| HeadState {
            tokens: 0,
            k_group: GroupBuffer::new(per_page),
            v_group: GroupBuffer::new(per_page),
            k_stripe: GroupBuffer::new(stripe_tokens),
        });
        state.tokens += 1;
        let full_k = state.k_group.push(k_row.to_vec());
        let full_v = state.v_group.push(v_row.to_vec());
        let full_stripe = match self.config.policy {
            WritePolicy::BlockBatched => state.k_stripe.push(k_row.to_vec()),
            WritePolicy::PerTokenPage => None,
        };

        let mut intents = Vec::new();
        if let Some((base, rows)) = full_k {
            intents.push(self.queue_token_page(layer, head, KvTensor::K, base, rows));
        }
        if let Some((base, rows)) = full_v {
            intents.push(self.queue_token_page(layer, head, KvTensor::V, base, rows));
        }
        if let Some((base, rows)) = full_stripe {
            intents.extend(self.queue_stripes(layer, head, base, rows));
        }
        match self.config.policy {
            WritePolicy::BlockBatched => self.program_pending(false)?,
            WritePolicy::PerTokenPage => self.program_pending(true)?,
        }
        Ok(intents)
    }

    /// Programs every queued full page, leaving partially filled buffers in DRAM.
    pub fn sync(&mut self) -> Result<()> {
        self.program_pending(true)
    }

    /// End of request: pads and flushes partial buffers, then programs everything.
    pub fn finish(&mut self) -> Result<()> {
        let keys: Vec<(usize, usize)> = self.heads.keys().copied().collect();
        for (layer, head) in keys {
            let state = self.heads.get_mut(&(layer, head)).expect("head present");
            let k = (!state.k_group.is_empty()).then(|| state.k_group.take());
            let v = (!state.v_group.is_empty()).then(|| state.v_group.take());
            let s = (!state.k_stripe.is_empty()).then(|| state.k_stripe.take());
            if let Some((base, rows)) = k {
                self.queue_token_page(layer, head, KvTensor::K, base, rows);
            }
            if let Some((base, rows)) = v {
                self.queue_token_page(layer, head, KvTensor::V, base, rows);
            }
            if let Some((base, rows)) = s {
                if self.config.policy == WritePolicy::BlockBatched {
                    self.queue_stripes(layer, head, base, rows);
                }
            }
        }
        self.program_pending(true)
    }

    /// Drops the request's KV cache: every block it touched is erased and the tables reset.
    pub fn release(&mut self) {
        let blocks: BTreeSet<_> = self
            .token_table
            .values()
            .chain(self.stripe_table.values())
            .map(PhysicalPageAddress::block_id)
            .collect();
        self.stats.blocks_erased += blocks.len() as u64;
        self.token_table.clear();
        self.stripe_table.clear();
        self.heads.clear();
        self.pending.clear();
        self.pages.clear();
        self.frontier.iter_mut().for_each(|f| *f = 0);
    }

    fn check_tokens(&self, layer: usize, head: usize, mask: &SelectionMask, axis: Axis) -> Result<usize> {
        self.check_head(layer, head)?;
        if mask.axis != axis {
            return Err(Error::Mapping(format!("expected a {axis:?} mask, got {:?}", mask.axis)));
        }
        Ok(self.token_count(layer, head))
    }

    /// Token-indexed pages holding the selected tokens of one tensor.
    pub fn lookup_token_pages(&self, layer: usize, head: usize, mask: &SelectionMask, tensor: KvTensor) -> Result<PageLookup> {
        let count = self.check_tokens(layer, head, mask, Axis::Token)?;
        if let Some(&t) = mask.selected.last().filter(|&&t| t >= count) {
            return Err(Error::Mapping(format!("token {t} not written to head ({layer}, {head})")));
        }
        let mut out = PageLookup::default();
        for group_id in group_expand(mask, self.config.tokens_per_page())? {
            let key = TokenGroupKey {
                layer,
                head,
                tensor,
                group_id,
            };
            match self.token_table.get(&key) {
                Some(a) => out.pages.push(*a),
                None => out.dram_hits += 1,
            }
        }
        Ok(out)
    }

    /// Embedding-indexed pages holding the selected embeddings over `tokens`.
    pub fn lookup_embedding_pages(&self, layer: usize, head: usize, mask: &SelectionMask, tokens: Range<usize>) -> Result<PageLookup> {
        let count = self.check_tokens(layer, head, mask, Axis::Embedding)?;
        self.check_embedding_request(mask, &tokens, count)?;
        let mut out = PageLookup::default();
        if tokens.is_empty() {
            return Ok(out);
        }
        let stripe = self.config.stripe_tokens();
        for eg in group_expand(mask, self.config.embedding_group)? {
            for s in tokens.start / stripe..=(tokens.end - 1) / stripe {
                let key = EmbeddingStripeKey {
                    layer,
                    head,
                    embedding_group_id: eg,
                    token_stripe_id: s,
                };
                match self.stripe_table.get(&key) {
                    Some(a) => out.pages.push(*a),
                    None => out.dram_hits += 1,
                }
            }
        }
        Ok(out)
    }

    fn check_embedding_request(&self, mask: &SelectionMask, tokens: &Range<usize>, count: usize) -> Result<()> {
        if self.config.policy == WritePolicy::PerTokenPage {
            return Err(Error::Mapping("per-token policy keeps no embedding-indexed copy".into()));
        }
        if tokens.end > count || tokens.start > tokens.end {
            return Err(Error::Mapping(format!("tokens {tokens:?} outside the {count} written")));
        }
        if let Some(&e) = mask.selected.last().filter(|&&e| e >= self.config.head_dim) {
            return Err(Error::Mapping(format!("embedding {e} beyond head_dim {}", self.config.head_dim)));
        }
        Ok(())
    }

    /// Page contents from flash, the program queue, or the open buffer.
    fn page_data(&self, target: PageTarget) -> Result<Vec<f64>> {
        let flashed = match target {
            PageTarget::Token(k) => self.token_table.get(&k),
            PageTarget::Stripe(k) => self.stripe_table.get(&k),
        };
        if let Some(addr) = flashed {
            return self
                .pages
                .get(addr)
                .cloned()
                .ok_or_else(|| Error::Mapping(format!("page {addr:?} has no retained contents")));
        }
        if let Some(p) = self.pending.iter().find(|p| p.intent.target == target) {
            return Ok(p.data.clone());
        }
        let (layer, head) = match target {
            PageTarget::Token(k) => (k.layer, k.head),
            PageTarget::Stripe(k) => (k.layer, k.head),
        };
        let state = self
            .heads
            .get(&(layer, head))
            .ok_or_else(|| Error::Mapping(format!("no data for head ({layer}, {head})")))?;
        match target {
            PageTarget::Token(k) => {
                let buf = if k.tensor == KvTensor::K { &state.k_group } else { &state.v_group };
                if buf.base() / self.config.tokens_per_page() == k.group_id && !buf.is_empty() {
                    return Ok(buf.rows().concat());
                }
            }
            PageTarget::Stripe(k) => {
                let buf = &state.k_stripe;
                if buf.base() / self.config.stripe_tokens() == k.token_stripe_id && !buf.is_empty() {
                    let g = self.config.embedding_group;
                    let cols = (k.embedding_group_id * g)..((k.embedding_group_id + 1) * g).min(self.config.head_dim);
                    let mut data = Vec::new();
                    for e in cols {
                        data.extend(buf.rows().iter().map(|r| r[e]));
                    }
                    return Ok(data);
                }
            }
        }
        Err(Error::Mapping(format!("no page holds {target:?}")))
    }

    /// Gathers the selected rows of K or V through page loads and a filter.
    pub fn read_token_rows(&self, layer: usize, head: usize, tensor: KvTensor, mask: &SelectionMask) -> Result<Matrix> {
        self.lookup_token_pages(layer, head, mask, tensor)?;
        let d = self.config.head_dim;
        let per_page = self.config.tokens_per_page();
        let mut groups = BTreeMap::new();
        for group_id in group_expand(mask, per_page)? {
            let data = self.page_data(PageTarget::Token(TokenGroupKey {
                layer,
                head,
                tensor,
                group_id,
            }))?;
            groups.insert(group_id, Matrix::from_vec(data.len() / d, d, data)?);
        }
        filter_groups(
            &LoadedGroups {
                group_size: per_page,
                row_len: d,
                groups,
            },
            mask,
        )
    }

    /// Gathers the selected K columns over `tokens`, one row per selected embedding.
    pub fn read_embedding_columns(&self, layer: usize, head: usize, mask: &SelectionMask, tokens: Range<usize>) -> Result<Matrix> {
        self.lookup_embedding_pages(layer, head, mask, tokens.clone())?;
        let g = self.config.embedding_group;
        let stripe = self.config.stripe_tokens();
        let width = tokens.len();
        let mut groups = BTreeMap::new();
        for eg in group_expand(mask, g)? {
            let rows_in_group = (g).min(self.config.head_dim - eg * g);
            let mut m = Matrix::zeros(rows_in_group, width);
            if width > 0 {
                for s in tokens.start / stripe..=(tokens.end - 1) / stripe {
                    let data = self.page_data(PageTarget::Stripe(EmbeddingStripeKey {
                        layer,
                        head,
                        embedding_group_id: eg,
                        token_stripe_id: s,
                    }))?;
                    let held = data.len() / rows_in_group;
                    let first = s * stripe;
                    for t in tokens.start.max(first)..tokens.end.min(first + held) {
                        for e in 0..rows_in_group {
                            m.row_mut(e)[t - tokens.start] = data[e * held + (t - first)];
                        }
                    }
                }
            }
            groups.insert(eg, m);
        }
        filter_groups(
            &LoadedGroups {
                group_size: g,
                row_len: width,
                groups,
            },
            mask,
        )
    }

    pub fn snapshot(&self) -> LayoutSnapshot {
        LayoutSnapshot {
            config: self.config.clone(),
            token_table: self.token_table.iter().map(|(k, v)| (*k, *v)).collect(),
            stripe_table: self.stripe_table.iter().map(|(k, v)| (*k, *v)).collect(),
            token_counts: self.heads.iter().map(|(k, h)| (*k, h.tokens)).collect(),
            frontier: self.frontier.clone(),
            stats: self.stats,
        }
    }

    pub fn dump_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.snapshot())?)
    }

    /// Rebuilds tables and allocation state. Page contents and DRAM buffers are not
    /// restored, so only lookups (not data reads) are meaningful afterwards.
    pub fn restore(snapshot: LayoutSnapshot) -> Result<Self> {
        let mut layout = Self::new(snapshot.config)?;
        if snapshot.frontier.len() != layout.frontier.len() {
            return Err(Error::Parse("frontier length does not match channel count".into()));
        }
        for (key, addr) in snapshot.token_table {
            if !layout.config.geometry.contains(&addr) {
                return Err(Error::Parse(format!("address {addr:?} outside geometry")));
            }
            layout.token_table.insert(key, addr);
        }
        for (key, addr) in snapshot.stripe_table {
            if !layout.config.geometry.contains(&addr) {
                return Err(Error::Parse(format!("address {addr:?} outside geometry")));
            }
            layout.stripe_table.insert(key, addr);
        }
        let (per_page, stripe) = (layout.config.tokens_per_page(), layout.config.stripe_tokens());
        for ((layer, head), tokens) in snapshot.token_counts {
            let mut state = HeadState {
                tokens,
                k_group: GroupBuffer::new(per_page),
                v_group: GroupBuffer::new(per_page),
                k_stripe: GroupBuffer::new(stripe),
            };
            state.k_group.base = tokens - tokens % per_page;
            state.v_group.base = state.k_group.base;
            state.k_stripe.base = tokens - tokens % stripe;
            layout.heads.insert((layer, head), state);
        }
        layout.frontier = snapshot.frontier;
        layout.stats = snapshot.stats;
        Ok(layout)
    }

    pub fn restore_json(json: &str) -> Result<Self> {
        Self::restore(serde_json::from_str(json)?)
    }
}
