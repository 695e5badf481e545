//! Timing model of the in-storage attention engine.
//!
//! One argtopk unit and two identical attention kernels share a flash backend. A head is a
//! chain of tasks; [`head_schedule`] list-schedules the chains of many heads in ready-time
//! order so loads of one head overlap compute of another.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::attention::{AttentionResult, HeadConfig, LoadPhase, STORAGE_ELEMENT_BYTES};
use crate::error::{Error, Result};
use crate::flash::{FlashSim, FlashTiming};
use crate::layout::{FlashGeometry, PhysicalPageAddress};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub clock_hz: f64,
    pub macs_per_cycle: usize,
    /// Elements per cycle.
    pub softmax_throughput: f64,
    pub argtopk_throughput: f64,
    /// Bytes per cycle per channel. Filtering runs at line rate and adds no latency.
    pub nfc_filter_rate: f64,
    pub kernel_count: usize,
    /// MACs given to each kernel; an even split when absent.
    #[serde(default)]
    pub kernel_macs: Option<usize>,
    /// Bytes per second for returning outputs to the host.
    pub output_bandwidth: f64,
}

impl Default for EngineConfig {
    fn default() -> Self {
        Self {
            clock_hz: 285e6,
            macs_per_cycle: 768,
            softmax_throughput: 1.0,
            argtopk_throughput: 1.0,
            nfc_filter_rate: 16.0,
            kernel_count: 2,
            kernel_macs: None,
            output_bandwidth: 7e9,
        }
    }
}

impl EngineConfig {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            self.clock_hz,
            self.softmax_throughput,
            self.argtopk_throughput,
            self.nfc_filter_rate,
            self.output_bandwidth,
        ];
        if pos.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.macs_per_cycle == 0 {
            return Err(Error::config("engine rates must be positive"));
        }
        if self.kernel_count != 2 {
            return Err(Error::config(format!("kernel_count must be 2, got {}", self.kernel_count)));
        }
        if self.kernel_macs.is_some_and(|m| m == 0 || m * self.kernel_count > self.macs_per_cycle) {
            return Err(Error::config("kernel_macs must be in 1..=macs_per_cycle/kernel_count"));
        }
        Ok(())
    }

    pub fn macs_per_kernel(&self) -> usize {
        self.kernel_macs.unwrap_or(self.macs_per_cycle / self.kernel_count).max(1)
    }

    pub fn cycle_us(&self) -> f64 {
        1e6 / self.clock_hz
    }

    fn mac_us(&self, macs: u64) -> f64 {
        gemv_cycles(macs, self.macs_per_kernel()) as f64 * self.cycle_us()
    }

    fn softmax_us(&self, elements: usize) -> f64 {
        (elements as f64 / self.softmax_throughput).ceil() * self.cycle_us()
    }

    fn argtopk_us(&self, elements: usize) -> f64 {
        (elements as f64 / self.argtopk_throughput).ceil() * self.cycle_us()
    }
}

/// Cycles for `macs` multiply-accumulates on `units` MAC units.
pub fn gemv_cycles(macs: u64, units: usize) -> u64 {
    macs.div_ceil(units as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionMode {
    /// Full K and V rows; no score approximation.
    Dense,
    Sparf,
}

/// What one head asks of the engine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadWork {
    pub mode: AttentionMode,
    pub head_dim: usize,
    pub seq_len: usize,
    pub kept_embeddings: usize,
    pub kept_tokens: usize,
    /// Embeddings per embedding-indexed page.
    pub embedding_group: usize,
    pub page_size: usize,
    pub embedding_groups_loaded: usize,
    pub token_groups_loaded: usize,
    /// Offsets the head's pages across channels.
    pub head_slot: usize,
}

impl HeadWork {
    pub fn dense(head_dim: usize, seq_len: usize, page_size: usize, head_slot: usize) -> Self {
        let mut w = Self {
            mode: AttentionMode::Dense,
            head_dim,
            seq_len,
            kept_embeddings: head_dim,
            kept_tokens: seq_len,
            embedding_group: 1,
            page_size,
            embedding_groups_loaded: 0,
            token_groups_loaded: 0,
            head_slot,
        };
        w.token_groups_loaded = w.token_groups();
        w
    }

    /// SparF work where a fraction `min(1, load_factor · kept/total)` of groups is touched
    /// on each axis.
    #[allow(clippy::too_many_arguments)]
    pub fn sparf(
        head_dim: usize,
        seq_len: usize,
        kept_embeddings: usize,
        kept_tokens: usize,
        embedding_group: usize,
        page_size: usize,
        head_slot: usize,
        load_factor: f64,
    ) -> Self {
        let mut w = Self {
            mode: AttentionMode::Sparf,
            head_dim,
            seq_len,
            kept_embeddings,
            kept_tokens,
            embedding_group: embedding_group.max(1),
            page_size,
            embedding_groups_loaded: 0,
            token_groups_loaded: 0,
            head_slot,
        };
        let frac = |kept: usize, total: usize| (load_factor * kept as f64 / total.max(1) as f64).min(1.0);
        let loaded = |kept: usize, total: usize, groups: usize| {
            let by_frac = (frac(kept, total) * groups as f64).ceil() as usize;
            by_frac.clamp(kept.min(1), groups.min(kept.max(1)))
        };
        w.embedding_groups_loaded = loaded(kept_embeddings, head_dim, w.embedding_groups());
        w.token_groups_loaded = loaded(kept_tokens, seq_len, w.token_groups());
        w
    }

    /// Work measured from an executed SparF head.
    pub fn from_result(cfg: &HeadConfig, result: &AttentionResult, head_slot: usize) -> Self {
        let stripes = cfg.seq_len.div_ceil(cfg.stripe_tokens()).max(1) as u64;
        let mut emb = 0;
        let mut tok = 0;
        for t in &result.traces {
            match t.phase {
                LoadPhase::EmbeddingColumns => emb = (t.pages_requested / stripes) as usize,
                LoadPhase::TokenRows => tok = (t.pages_requested / 2) as usize,
            }
        }
        Self {
            mode: AttentionMode::Sparf,
            head_dim: cfg.head_dim,
            seq_len: cfg.seq_len,
            kept_embeddings: cfg.kept_embeddings,
            kept_tokens: cfg.kept_tokens,
            embedding_group: cfg.embedding_group,
            page_size: cfg.page_bytes() as usize,
            embedding_groups_loaded: emb,
            token_groups_loaded: tok,
            head_slot,
        }
    }

    pub fn tokens_per_page(&self) -> usize {
        (self.page_size / (self.head_dim * STORAGE_ELEMENT_BYTES as usize)).max(1)
    }

    pub fn stripe_tokens(&self) -> usize {
        (self.page_size / (self.embedding_group * STORAGE_ELEMENT_BYTES as usize)).max(1)
    }

    pub fn token_groups(&self) -> usize {
        self.seq_len.div_ceil(self.tokens_per_page())
    }

    pub fn embedding_groups(&self) -> usize {
        self.head_dim.div_ceil(self.embedding_group)
    }

    pub fn column_pages(&self) -> usize {
        match self.mode {
            AttentionMode::Dense => 0,
            AttentionMode::Sparf => self.embedding_groups_loaded * self.seq_len.div_ceil(self.stripe_tokens()),
        }
    }

    /// K pages and V pages each.
    pub fn row_pages(&self) -> usize {
        self.token_groups_loaded
    }

    pub fn pages(&self) -> usize {
        self.column_pages() + 2 * self.row_pages()
    }

    pub fn bytes_loaded(&self) -> u64 {
        (self.pages() * self.page_size) as u64
    }

    pub fn macs(&self) -> u64 {
        let (d, s, r, k) = (
            self.head_dim as u64,
            self.seq_len as u64,
            self.kept_embeddings as u64,
            self.kept_tokens as u64,
        );
        match self.mode {
            AttentionMode::Dense => 2 * s * d,
            AttentionMode::Sparf => r * s + 2 * k * d,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || self.seq_len == 0 || self.page_size == 0 {
            return Err(Error::config("head work needs head_dim, seq_len and page_size >= 1"));
        }
        if self.kept_embeddings == 0 || self.kept_embeddings > self.head_dim {
            return Err(Error::config("kept_embeddings outside 1..=head_dim"));
        }
        if self.kept_tokens == 0 || self.kept_tokens > self.seq_len {
            return Err(Error::config("kept_tokens outside 1..=seq_len"));
        }
        if self.embedding_groups_loaded > self.embedding_groups() || self.token_groups_loaded > self.token_groups() {
            return Err(Error::config("more groups loaded than exist"));
        }
        Ok(())
    }

    /// Addresses for pages on the given channel ordinals. Selected groups are taken to be
    /// spread evenly over channels; each channel hands out dies in rotation, as the page
    /// allocator does, starting from a head-dependent die.
    fn place(&self, geometry: &FlashGeometry, channel_ordinals: impl Iterator<Item = usize>, die_offset: usize) -> Vec<PhysicalPageAddress> {
        let c = geometry.channels;
        let mut used = vec![0usize; c];
        channel_ordinals
            .map(|o| {
                let channel = (self.head_slot + o) % c;
                let die = (self.head_slot * 11 + die_offset + used[channel]) % geometry.dies_per_channel;
                used[channel] += 1;
                PhysicalPageAddress {
                    channel,
                    die,
                    plane: 0,
                    block: 0,
                    page: 0,
                }
            })
            .collect()
    }

    /// Step-2 page addresses under the striped placement.
    pub fn column_addresses(&self, geometry: &FlashGeometry) -> Vec<PhysicalPageAddress> {
        if self.mode == AttentionMode::Dense {
            return Vec::new();
        }
        let stripes = self.seq_len.div_ceil(self.stripe_tokens());
        let ordinals = (0..self.embedding_groups_loaded).flat_map(|eg| (0..stripes).map(move |s| eg + s));
        self.place(geometry, ordinals, 0)
    }

    /// Token-indexed page addresses of one tensor.
    pub fn row_addresses(&self, geometry: &FlashGeometry, die_offset: usize) -> Vec<PhysicalPageAddress> {
        self.place(geometry, 0..self.token_groups_loaded, die_offset)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageBreakdown {
    pub logit0_us: f64,
    pub argtopk_r_us: f64,
    pub k_column_load_us: f64,
    pub argtopk_k_us: f64,
    pub kv_row_load_us: f64,
    pub logit_us: f64,
    pub attend_us: f64,
    pub output_transfer_us: f64,
}

impl StageBreakdown {
    pub fn stages(&self) -> [(&'static str, f64); 8] {
        [
            ("logit0", self.logit0_us),
            ("argtopk_r", self.argtopk_r_us),
            ("k_column_load", self.k_column_load_us),
            ("argtopk_k", self.argtopk_k_us),
            ("kv_row_load", self.kv_row_load_us),
            ("logit", self.logit_us),
            ("attend", self.attend_us),
            ("output_transfer", self.output_transfer_us),
        ]
    }

    pub fn total_us(&self) -> f64 {
        self.stages().iter().map(|(_, v)| v).sum()
    }

    pub fn max_stage_us(&self) -> f64 {
        self.stages().iter().map(|(_, v)| *v).fold(0.0, f64::max)
    }
}

/// Event times of one scheduled head.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct HeadTimes {
    pub start_us: f64,
    pub argtopk_r_end: f64,
    pub columns_done: f64,
    pub logit0_end: f64,
    pub argtopk_k_end: f64,
    pub k_rows_done: f64,
    pub v_rows_done: f64,
    pub logit_end: f64,
    pub attend_end: f64,
    pub complete_us: f64,
}

impl HeadTimes {
    /// Exclusive critical-path segments; they sum to `complete_us - start_us`.
    pub fn breakdown(&self) -> StageBreakdown {
        StageBreakdown {
            argtopk_r_us: self.argtopk_r_end - self.start_us,
            k_column_load_us: self.columns_done - self.argtopk_r_end,
            logit0_us: self.logit0_end - self.columns_done,
            argtopk_k_us: self.argtopk_k_end - self.logit0_end,
            kv_row_load_us: (self.k_rows_done - self.argtopk_k_end) + (self.v_rows_done - self.logit_end).max(0.0),
            logit_us: self.logit_end - self.k_rows_done,
            attend_us: self.attend_end - self.logit_end.max(self.v_rows_done),
            output_transfer_us: self.complete_us - self.attend_end,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub heads: Vec<HeadTimes>,
    pub start_us: f64,
    pub makespan_us: f64,
    pub pages_read: u64,
    pub kernel_busy_us: f64,
}

impl Schedule {
    pub fn completions(&self) -> Vec<f64> {
        self.heads.iter().map(|h| h.complete_us).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Task {
    ArgtopkR,
    ColumnLoad,
    Logit0,
    ArgtopkK,
    RowLoad,
    Logit,
    Attend,
    Output,
}

#[derive(Debug, Clone, Copy)]
struct Ready {
    at: f64,
    head: usize,
    task: Task,
}

impl PartialEq for Ready {
    fn eq(&self, o: &Self) -> bool {
        self.cmp(o) == Ordering::Equal
    }
}
impl Eq for Ready {}
impl PartialOrd for Ready {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Ready {
    // reversed: BinaryHeap pops the earliest, ties by head then task
    fn cmp(&self, o: &Self) -> Ordering {
        o.at.total_cmp(&self.at)
            .then(o.head.cmp(&self.head))
            .then(o.task.cmp(&self.task))
    }
}

/// List-schedules `heads` on one device starting at `start_us`. Flash state carries over
/// from earlier calls on `flash`.
pub fn head_schedule(heads: &[HeadWork], cfg: &EngineConfig, flash: &mut FlashSim, start_us: f64) -> Result<Schedule> {
    cfg.validate()?;
    if heads.is_empty() {
        return Err(Error::config("head_schedule needs at least one head"));
    }
    for h in heads {
        h.validate()?;
        if h.page_size != flash.geometry().page_size {
            return Err(Error::config(format!(
                "head page size {} differs from flash page size {}",
                h.page_size,
                flash.geometry().page_size
            )));
        }
    }
    let geometry = *flash.geometry();
    let mut times = vec![
        HeadTimes {
            start_us,
            ..HeadTimes::default()
        };
        heads.len()
    ];
    let mut argtopk_free = start_us;
    let mut kernels = vec![start_us; cfg.kernel_count];
    let mut kernel_busy = 0.0;
    let mut pages_read = 0u64;
    let mut queue = BinaryHeap::new();
    for (i, h) in heads.iter().enumerate() {
        let first = match h.mode {
            AttentionMode::Dense => Task::RowLoad,
            AttentionMode::Sparf => Task::ArgtopkR,
        };
        if first == Task::RowLoad {
            let t = &mut times[i];
            t.argtopk_r_end = start_us;
            t.columns_done = start_us;
            t.logit0_end = start_us;
            t.argtopk_k_end = start_us;
        }
        queue.push(Ready {
            at: start_us,
            head: i,
            task: first,
        });
    }

    let mut on_kernel = |ready: f64, dur: f64, kernels: &mut Vec<f64>| {
        let (k, free) = kernels
            .iter()
            .copied()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
            .expect("kernels");
        let s = ready.max(free);
        kernels[k] = s + dur;
        kernel_busy += dur;
        s + dur
    };

    while let Some(Ready { at, head, task }) = queue.pop() {
        let h = &heads[head];
        let t = &mut times[head];
        let next = match task {
            Task::ArgtopkR => {
                let s = at.max(argtopk_free);
                argtopk_free = s + cfg.argtopk_us(h.head_dim);
                t.argtopk_r_end = argtopk_free;
                Some((Task::ColumnLoad, argtopk_free))
            }
            Task::ColumnLoad => {
                let pages = h.column_addresses(&geometry);
                pages_read += pages.len() as u64;
                t.columns_done = flash.schedule_reads(&pages, at)?.completion_us().unwrap_or(at);
                Some((Task::Logit0, t.columns_done))
            }
            Task::Logit0 => {
                let dur = cfg.mac_us(h.kept_embeddings as u64 * h.seq_len as u64) + cfg.softmax_us(h.seq_len);
                t.logit0_end = on_kernel(at, dur, &mut kernels);
                Some((Task::ArgtopkK, t.logit0_end))
            }
            Task::ArgtopkK => {
                let s = at.max(argtopk_free);
                argtopk_free = s + cfg.argtopk_us(h.seq_len);
                t.argtopk_k_end = argtopk_free;
                Some((Task::RowLoad, argtopk_free))
            }
            Task::RowLoad => {
                let k_pages = h.row_addresses(&geometry, 0);
                let v_pages = h.row_addresses(&geometry, geometry.dies_per_channel / 2);
                pages_read += (k_pages.len() + v_pages.len()) as u64;
                t.k_rows_done = flash.schedule_reads(&k_pages, at)?.completion_us().unwrap_or(at);
                t.v_rows_done = flash.schedule_reads(&v_pages, at)?.completion_us().unwrap_or(at);
                Some((Task::Logit, t.k_rows_done))
            }
            Task::Logit => {
                let dur = cfg.mac_us(h.kept_tokens as u64 * h.head_dim as u64) + cfg.softmax_us(h.kept_tokens);
                t.logit_end = on_kernel(at, dur, &mut kernels);
                Some((Task::Attend, t.logit_end.max(t.v_rows_done)))
            }
            Task::Attend => {
                let dur = cfg.mac_us(h.kept_tokens as u64 * h.head_dim as u64);
                t.attend_end = on_kernel(at, dur, &mut kernels);
                Some((Task::Output, t.attend_end))
            }
            Task::Output => {
                let bytes = h.head_dim as f64 * STORAGE_ELEMENT_BYTES as f64;
                t.complete_us = at + bytes / cfg.output_bandwidth * 1e6;
                None
            }
        };
        if let Some((task, at)) = next {
            queue.push(Ready { at, head, task });
        }
    }
    let end = times.iter().map(|t| t.complete_us).fold(start_us, f64::max);
    Ok(Schedule {
        heads: times,
        start_us,
        makespan_us: end - start_us,
        pages_read,
        kernel_busy_us: kernel_busy,
    })
}

/// Critical-path stage durations of one head on an idle device.
pub fn stage_latencies(
    cfg: &EngineConfig,
    work: &HeadWork,
    geometry: FlashGeometry,
    timing: FlashTiming,
) -> Result<StageBreakdown> {
    let mut flash = FlashSim::new(geometry, timing)?;
    let s = head_schedule(std::slice::from_ref(work), cfg, &mut flash, 0.0)?;
    Ok(s.heads[0].breakdown())
}

/// Closed-form lower bounds on the time to serve `heads`: (flash transfer, MAC compute), µs.
pub fn time_bounds(heads: &[HeadWork], cfg: &EngineConfig, geometry: &FlashGeometry, timing: &FlashTiming) -> (f64, f64) {
    let pages: usize = heads.iter().map(HeadWork::pages).sum();
    let macs: u64 = heads.iter().map(HeadWork::macs).sum();
    let flash = pages as f64 * timing.transfer_us(geometry.page_size) / geometry.channels as f64;
    let compute = macs as f64 / (cfg.macs_per_cycle as f64 * cfg.clock_hz) * 1e6;
    (flash, compute)
}
