use std::collections::BTreeMap;

use super::{
    kv_cache_bytes, linear_layer_cost, operator_cost, prefill_layer_compute, prefill_time, Breakdown, GroupLoad, KvTier,
    Operator, Phase, Scenario, ScenarioReport, SystemKind,
};
use crate::attention::{sparf_attention, HeadConfig, HeadTensors, STORAGE_ELEMENT_BYTES};
use crate::engine::{head_schedule, HeadWork};
use crate::error::{Error, Result};
use crate::flash::FlashSim;
use crate::layout::{default_embedding_group, group_size_tokens};

const LATENCY_SAMPLES: usize = 16;

/// Heads of sequence `seq` that land on CSD `csd` when (sequence, head) pairs are dealt
/// round-robin over `csds` drives.
pub(crate) fn heads_on_csd(seq: usize, heads: usize, csd: usize, csds: usize) -> usize {
    (0..heads).filter(|h| (seq * heads + h) % csds == csd).count()
}

/// For each CSD, how many sequences of `seqs` put `h` heads on it.
fn head_histograms(seqs: std::ops::Range<usize>, heads: usize, csds: usize) -> Vec<BTreeMap<usize, usize>> {
    (0..csds)
        .map(|c| {
            let mut hist = BTreeMap::new();
            for s in seqs.clone() {
                let h = heads_on_csd(s, heads, c, csds);
                if h > 0 {
                    *hist.entry(h).or_insert(0) += 1;
                }
            }
            hist
        })
        .collect()
}

/// Latency of one attention request (one sequence, one layer, `h` heads) sampled over
/// context length and interpolated linearly.
struct RequestLatency {
    samples: BTreeMap<usize, Vec<(usize, f64)>>,
}

impl RequestLatency {
    fn build(s: &Scenario, head_counts: &[usize]) -> Result<Self> {
        let w = &s.workload;
        let first = w.input_len + 1;
        let last = w.max_context().max(first);
        let points: Vec<usize> = if last - first < LATENCY_SAMPLES {
            (first..=last).collect()
        } else {
            let mut p: Vec<usize> = (0..LATENCY_SAMPLES)
                .map(|i| first + (last - first) * i / (LATENCY_SAMPLES - 1))
                .collect();
            p.dedup();
            p
        };
        let mut samples = BTreeMap::new();
        for &h in head_counts {
            let mut row = Vec::with_capacity(points.len());
            for &ctx in &points {
                let work = head_work(s, ctx, h)?;
                let mut flash = FlashSim::new(s.geometry, s.flash_timing)?;
                let sched = head_schedule(&work, &s.engine, &mut flash, 0.0)?;
                row.push((ctx, s.hardware.csd_request_latency + sched.makespan_us * 1e-6));
            }
            samples.insert(h, row);
        }
        Ok(Self { samples })
    }

    fn at(&self, heads: usize, ctx: usize) -> f64 {
        let row = &self.samples[&heads];
        let i = row.partition_point(|(c, _)| *c < ctx);
        if i == 0 {
            return row[0].1;
        }
        if i == row.len() {
            return row[row.len() - 1].1;
        }
        let (c0, t0) = row[i - 1];
        let (c1, t1) = row[i];
        t0 + (t1 - t0) * (ctx - c0) as f64 / (c1 - c0) as f64
    }
}

/// Engine work for `heads` heads of one sequence at context `ctx`.
pub fn head_work(s: &Scenario, ctx: usize, heads: usize) -> Result<Vec<HeadWork>> {
    let d = s.model.head_dim();
    let page = s.geometry.page_size;
    let eb = STORAGE_ELEMENT_BYTES as usize;
    if s.sparsity.is_dense() {
        return Ok((0..heads).map(|h| HeadWork::dense(d, ctx, page, h)).collect());
    }
    let r = s.sparsity.kept(d);
    let k = s.sparsity.kept(ctx);
    let g = default_embedding_group(page, eb, s.workload.max_context());
    match s.sparsity.group_load {
        GroupLoad::Factor { factor } => Ok((0..heads)
            .map(|h| HeadWork::sparf(d, ctx, r, k, g, page, h, factor))
            .collect()),
        GroupLoad::Measured => {
            let cfg = HeadConfig {
                head_dim: d,
                seq_len: ctx,
                kept_embeddings: r,
                kept_tokens: k,
                embedding_group: g,
                token_group: group_size_tokens(page, d, eb)?,
            };
            (0..heads)
                .map(|h| {
                    let seed = s.seed ^ ((ctx as u64) << 20) ^ h as u64;
                    let t = HeadTensors::random(seed, d, ctx);
                    Ok(HeadWork::from_result(&cfg, &sparf_attention(&t, &cfg)?, h))
                })
                .collect()
        }
    }
}

/// Two sub-batches alternate between the GPU and the CSDs across all layers.
/// Each chain is pre, csd, mid, csd, mid, ..., csd, post; pre/mid/post run on the GPU.
fn pipelined_step(layers: usize, pre: [f64; 2], csd: [f64; 2], post: [f64; 2]) -> f64 {
    #[derive(Clone, Copy)]
    enum On {
        Gpu,
        Csd,
    }
    let task = |sb: usize, i: usize| -> (On, f64) {
        let n = 2 * layers + 1;
        if i == 0 {
            (On::Gpu, pre[sb])
        } else if i % 2 == 1 {
            (On::Csd, csd[sb])
        } else if i == n - 1 {
            (On::Gpu, post[sb])
        } else {
            (On::Gpu, post[sb] + pre[sb])
        }
    };
    let len = 2 * layers + 1;
    let mut next = [0usize; 2];
    let mut ready = [0.0f64; 2];
    let (mut gpu, mut dev) = (0.0f64, 0.0f64);
    while next[0] < len || next[1] < len {
        let mut best: Option<(f64, usize)> = None;
        for sb in 0..2 {
            if next[sb] == len {
                continue;
            }
            let free = match task(sb, next[sb]).0 {
                On::Gpu => gpu,
                On::Csd => dev,
            };
            let start = ready[sb].max(free);
            if best.is_none_or(|(b, _)| start < b) {
                best = Some((start, sb));
            }
        }
        let (start, sb) = best.expect("a chain has work left");
        let (on, dur) = task(sb, next[sb]);
        let end = start + dur;
        match on {
            On::Gpu => gpu = end,
            On::Csd => dev = end,
        }
        ready[sb] = end;
        next[sb] += 1;
    }
    ready[0].max(ready[1])
}

/// GPU runs projections and FFN; every CSD runs attention for its share of
/// (sequence, head) pairs, one sequence's request at a time.
pub fn simulate_instinfer(s: &Scenario) -> Result<ScenarioReport> {
    s.validate()?;
    if s.system != SystemKind::Instinfer {
        return Err(Error::config("simulate_instinfer needs the instinfer system kind"));
    }
    s.vram_kv_budget()?;
    let (m, hw, w) = (&s.model, &s.hardware, &s.workload);
    let n = hw.csd_count;
    let layers = m.layers as f64;

    // K is stored twice on flash.
    let stored = 1.5 * kv_cache_bytes(m, w.batch, w.max_context()) / n as f64;
    let capacity = s.geometry.capacity_bytes() as f64;
    if stored > capacity {
        return Err(Error::capacity(
            "csd flash capacity",
            format!("{stored:.3e} B per CSD exceeds {capacity:.3e} B"),
        ));
    }

    let link = |bytes: f64| (bytes / n as f64 / hw.pcie_csd).max(bytes / hw.pcie_gpu_host);
    let layer_compute = prefill_layer_compute(m, w, hw);
    let layer_push = link(kv_cache_bytes(m, w.batch, w.input_len) / layers);
    let prefill_s = prefill_time(&vec![layer_compute; m.layers], &vec![layer_push; m.layers]);

    let half = w.batch.div_ceil(2);
    let sub = [0..half, half..w.batch];
    let hists: Vec<Vec<BTreeMap<usize, usize>>> = sub.iter().map(|r| head_histograms(r.clone(), m.heads, n)).collect();
    let mut counts: Vec<usize> = hists.iter().flatten().flat_map(|h| h.keys().copied()).collect();
    counts.sort_unstable();
    counts.dedup();
    let latency = if w.output_len > 0 {
        Some(RequestLatency::build(s, &counts)?)
    } else {
        None
    };

    let mut breakdown = Breakdown::default();
    let mut decode_s = 0.0;
    let hbytes = (m.hidden * m.element_bytes) as f64;
    for t in 0..w.output_len {
        let ctx = w.input_len + t + 1;
        let lat = latency.as_ref().expect("built when decoding");
        let mut pre = [0.0; 2];
        let mut csd = [0.0; 2];
        let mut post = [0.0; 2];
        for sb in 0..2 {
            let bs = sub[sb].len();
            if bs == 0 {
                continue;
            }
            let qkv = operator_cost(Operator::QkvProj, Phase::Decode, m, bs, 1, hw);
            let linear = linear_layer_cost(m, Phase::Decode, bs, 1, hw);
            pre[sb] = qkv.time;
            post[sb] = linear.total() - qkv.time;
            let attention = hists[sb]
                .iter()
                .map(|hist| hist.iter().map(|(&h, &c)| c as f64 * lat.at(h, ctx)).sum::<f64>())
                .fold(0.0, f64::max);
            let transfer = link(3.0 * bs as f64 * hbytes) + link(bs as f64 * hbytes);
            csd[sb] = attention + transfer;
            breakdown.add(
                &Breakdown {
                    kv_access: attention,
                    transfer,
                    ..linear
                }
                .scaled(layers),
            );
        }
        decode_s += pipelined_step(m.layers, pre, csd, post);
    }

    Ok(ScenarioReport {
        system: SystemKind::Instinfer,
        csd_count: n,
        workload: *w,
        ratio: s.sparsity.ratio,
        prefill_s,
        decode_s,
        breakdown,
        peak_vram_bytes: m.weight_bytes() + hw.gpu_workspace_bytes,
        kv_tier: KvTier::Csd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{simulate_baseline, Sparsity, Workload};

    fn inst(batch: usize, csds: usize, sparsity: Sparsity) -> Scenario {
        Scenario::new(
            SystemKind::Instinfer,
            Workload {
                batch,
                input_len: 1024,
                output_len: 16,
            },
            sparsity,
        )
        .with_csds(csds)
    }

    #[test]
    fn round_robin_head_split() {
        let total: usize = (0..3).map(|c| heads_on_csd(5, 40, c, 3)).sum();
        assert_eq!(total, 40);
        assert_eq!(heads_on_csd(0, 40, 0, 1), 40);
        assert_eq!(heads_on_csd(7, 40, 3, 20), 2);
    }

    #[test]
    fn pipeline_overlaps_sub_batches() {
        // GPU and CSD stages of equal length: the second sub-batch hides behind the first
        let t = pipelined_step(1, [1.0, 1.0], [2.0, 2.0], [1.0, 1.0]);
        assert_eq!(t, 6.0);
        let serial = 2.0 * (1.0 + 2.0 + 1.0);
        assert!(t < serial);
        assert_eq!(pipelined_step(2, [1.0, 0.0], [1.0, 0.0], [1.0, 0.0]), 6.0);
    }

    #[test]
    fn two_csds_nearly_halve_attention() {
        let one = simulate_instinfer(&inst(64, 1, Sparsity::dense())).unwrap();
        let two = simulate_instinfer(&inst(64, 2, Sparsity::dense())).unwrap();
        let ratio = one.breakdown.kv_access / two.breakdown.kv_access;
        assert!((ratio / 2.0 - 1.0).abs() < 0.10, "{ratio}");
    }

    #[test]
    fn sparse_beats_dense_within_amdahl() {
        let dense = simulate_instinfer(&inst(64, 1, Sparsity::dense())).unwrap();
        let sparse = simulate_instinfer(&inst(64, 1, Sparsity::ratio(0.125))).unwrap();
        let speedup = dense.decode_s / sparse.decode_s;
        assert!(speedup > 1.0 && speedup < 8.0, "{speedup}");
    }

    #[test]
    fn beats_ssd_offload() {
        let mut base = inst(64, 1, Sparsity::dense());
        base.system = SystemKind::SsdOffload;
        let b = simulate_baseline(&base).unwrap();
        let i = simulate_instinfer(&inst(64, 1, Sparsity::dense())).unwrap();
        assert!(i.throughput() > b.throughput());
        assert!(i.breakdown.kv_access < 0.2 * b.breakdown.kv_access);
    }

    #[test]
    fn measured_group_load_runs() {
        let mut s = inst(2, 1, Sparsity::ratio(0.25));
        s.workload.input_len = 128;
        s.workload.output_len = 2;
        s.sparsity.group_load = GroupLoad::Measured;
        let r = simulate_instinfer(&s).unwrap();
        assert!(r.decode_s > 0.0);
    }

    #[test]
    fn zero_output_is_prefill_only() {
        let mut s = inst(4, 1, Sparsity::dense());
        s.workload.output_len = 0;
        let r = simulate_instinfer(&s).unwrap();
        assert_eq!(r.decode_s, 0.0);
        assert!(r.prefill_s > 0.0);
    }

    #[test]
    fn capacity_error_names_constraint() {
        let mut s = inst(256, 1, Sparsity::dense());
        s.geometry.blocks_per_plane = 16;
        let err = simulate_instinfer(&s).unwrap_err();
        assert!(err.to_string().contains("csd flash capacity"));
    }
}
