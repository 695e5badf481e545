//! Self-check suite behind `sparfsim verify`.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::attention::{
    argtopk, dense_attention, filter_groups, group_count, group_expand, load_groups, sparf_attention_with,
    sparq_attention, Axis, HeadConfig, HeadTensors, SelectionMask, SparfOptions, TopKKey,
};
use crate::engine::{head_schedule, stage_latencies, time_bounds, EngineConfig, HeadWork};
use crate::flash::{measure_bandwidth, striped_pages, FlashSim, FlashTiming};
use crate::layout::{
    embedding_stripe_tokens, group_size_tokens, FlashGeometry, KvLayout, KvTensor, LayoutConfig, WritePolicy,
};
use crate::oracle::{dense_scalar, sparf_scalar};
use crate::system::{kv_cache_bytes, simulate, ModelSpec, Scenario, Sparsity, SystemKind, Workload};
use crate::tensor::NormalSource;

/// Deliberate faults used to show the suite can fail.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mutation {
    /// Scales the approximate-score temperature by 1.01.
    Temperature,
}

impl std::str::FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "temperature" => Ok(Mutation::Temperature),
            _ => Err(format!("unknown mutation `{s}` (expected: temperature)")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct VerifyOptions {
    pub mutation: Option<Mutation>,
    pub seed: u64,
}

impl VerifyOptions {
    fn sparf_options(&self) -> SparfOptions {
        SparfOptions {
            temperature_scale: (self.mutation == Some(Mutation::Temperature)).then_some(1.01),
            ..SparfOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct CheckOutcome {
    pub name: &'static str,
    pub result: std::result::Result<(), String>,
    pub seconds: f64,
}

#[derive(Debug, Clone)]
pub struct VerifyReport {
    pub checks: Vec<CheckOutcome>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.result.is_ok())
    }

    pub fn failures(&self) -> usize {
        self.checks.iter().filter(|c| c.result.is_err()).count()
    }
}

type Check = fn(&VerifyOptions) -> std::result::Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

pub const CHECKS: [(&str, Check); 17] = [
    ("attention/topk-ties", topk_ties),
    ("attention/scalar-oracle", scalar_oracle),
    ("attention/sparq-equivalence", sparq_equivalence),
    ("attention/full-selection", full_selection),
    ("attention/normalization", normalization),
    ("attention/trace-ordering", trace_ordering),
    ("attention/dual-step", dual_step),
    ("layout/constants", layout_constants),
    ("layout/roundtrip", layout_roundtrip),
    ("layout/duplication-and-wa", layout_write_amplification),
    ("flash/bandwidth-ceiling", flash_ceiling),
    ("flash/conservation", flash_conservation),
    ("engine/additivity", engine_additivity),
    ("engine/dense-load", engine_dense_load),
    ("system/kv-sizing", kv_sizing),
    ("system/ordering", system_ordering),
    ("system/csd-scaling", csd_scaling),
];

pub fn run_verify(opts: &VerifyOptions) -> VerifyReport {
    let checks = CHECKS
        .iter()
        .map(|(name, check)| {
            let t = Instant::now();
            let result = check(opts);
            CheckOutcome {
                name,
                result,
                seconds: t.elapsed().as_secs_f64(),
            }
        })
        .collect();
    VerifyReport { checks }
}

fn random_config(src: &mut NormalSource, d: usize, s: usize) -> HeadConfig {
    let pick = |src: &mut NormalSource, opts: &[usize], cap: usize| {
        let v: Vec<usize> = opts.iter().copied().filter(|&g| g <= cap).collect();
        v[src.uniform_index(v.len())]
    };
    HeadConfig {
        head_dim: d,
        seq_len: s,
        kept_embeddings: 1 + src.uniform_index(d),
        kept_tokens: 1 + src.uniform_index(s),
        embedding_group: pick(src, &[1, 2, 4, 8, 16], d),
        token_group: pick(src, &[1, 2, 4, 8, 16], s),
    }
}

fn scalar_oracle(o: &VerifyOptions) -> std::result::Result<(), String> {
    let mut src = NormalSource::new(o.seed ^ 0x5eed);
    for i in 0..200 {
        let d = [16, 64, 128][i % 3];
        let s = [32, 256, 1024][(i / 3) % 3];
        let cfg = random_config(&mut src, d, s);
        let t = HeadTensors::random(o.seed.wrapping_add(i as u64), d, s);
        let got = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
        let (want, alpha) = sparf_scalar(
            &t.query,
            &t.keys,
            &t.values,
            &t.value_mean,
            cfg.kept_embeddings,
            cfg.kept_tokens,
            cfg.embedding_group,
            cfg.token_group,
        );
        let dev = got.out.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(dev <= 1e-9, "head {i} ({cfg:?}): output deviates by {dev:e}");
        ensure!((got.alpha - alpha).abs() <= 1e-9, "head {i}: alpha {} vs {alpha}", got.alpha);
    }
    Ok(())
}

fn sparq_equivalence(o: &VerifyOptions) -> std::result::Result<(), String> {
    let mut src = NormalSource::new(o.seed ^ 0x51);
    for i in 0..200 {
        let (d, s) = ([16, 64, 128][i % 3], [32, 256, 1024][(i / 3) % 3]);
        let mut cfg = random_config(&mut src, d, s);
        cfg.embedding_group = 1;
        cfg.token_group = 1;
        let t = HeadTensors::random(o.seed.wrapping_add(1000 + i as u64), d, s);
        let a = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
        let b = sparq_attention(&t, cfg.kept_embeddings, cfg.kept_tokens).map_err(|e| e.to_string())?;
        let dev = a.out.iter().zip(&b.out).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        ensure!(dev <= 1e-9, "head {i}: sparf vs sparq deviates by {dev:e}");
        ensure!(a.tokens == b.tokens, "head {i}: token selections differ");
    }
    Ok(())
}

fn full_selection(o: &VerifyOptions) -> std::result::Result<(), String> {
    for i in 0..100 {
        let (d, s) = ([16, 64, 128][i % 3], [32, 256, 1024][(i / 3) % 3]);
        let t = HeadTensors::random(o.seed.wrapping_add(2000 + i as u64), d, s);
        let cfg = HeadConfig {
            embedding_group: 8.min(d),
            token_group: 16,
            ..HeadConfig::full(d, s)
        };
        let sparse = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
        let dense = dense_attention(&t).map_err(|e| e.to_string())?;
        let scalar = dense_scalar(&t.query, &t.keys, &t.values);
        let norm = dense.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let err = sparse.out.iter().zip(&dense).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt() / norm;
        ensure!(err <= 1e-6, "head {i}: relative error {err:e} against dense");
        let dev = dense.iter().zip(&scalar).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        ensure!(dev <= 1e-9, "head {i}: dense path deviates from the scalar transcription by {dev:e}");
    }
    Ok(())
}

fn normalization(o: &VerifyOptions) -> std::result::Result<(), String> {
    let mut src = NormalSource::new(o.seed ^ 0x40);
    for i in 0..100 {
        let cfg = random_config(&mut src, 64, 256);
        let t = HeadTensors::random(o.seed.wrapping_add(3000 + i as u64), 64, 256);
        let r = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
        let sum: f64 = r.approx_scores.iter().sum();
        ensure!((sum - 1.0).abs() <= 1e-6, "head {i}: scores sum to {sum}");
        ensure!((0.0..=1.0).contains(&r.alpha), "head {i}: alpha {}", r.alpha);
    }
    Ok(())
}

fn trace_ordering(o: &VerifyOptions) -> std::result::Result<(), String> {
    let mut src = NormalSource::new(o.seed ^ 0x7a);
    for i in 0..100 {
        let cfg = random_config(&mut src, 128, 256);
        let t = HeadTensors::random(o.seed.wrapping_add(4000 + i as u64), 128, 256);
        let r = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
        for tr in &r.traces {
            ensure!(
                tr.bytes_after_filter <= tr.bytes_over_channel && tr.bytes_over_channel <= tr.dense_bytes,
                "head {i}: trace out of order {tr:?}"
            );
        }
        let again = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
        ensure!(again.out == r.out && again.traces == r.traces, "head {i}: rerun differs");
    }
    let t = HeadTensors::random(o.seed, 64, 128);
    let cfg = HeadConfig {
        kept_embeddings: 8,
        token_group: 16,
        ..HeadConfig::full(64, 128)
    };
    let r = sparf_attention_with(&t, &cfg, &o.sparf_options()).map_err(|e| e.to_string())?;
    ensure!(
        r.traces[1].bytes_over_channel == r.traces[1].dense_bytes,
        "k = S row load should read the whole tensor"
    );
    Ok(())
}

fn dual_step(_: &VerifyOptions) -> std::result::Result<(), String> {
    for s in 1..=32usize {
        let mut src = NormalSource::new(s as u64);
        let m = src.matrix(s, 3);
        for g in [1, 2, 4, 8, 16] {
            // every subset for small extents, a seeded sample of them above that
            let masks: Vec<u64> = if s <= 12 {
                (1..(1u64 << s)).collect()
            } else {
                (0..512).map(|_| (src.uniform_index(usize::MAX) as u64) & ((1u64 << s) - 1)).collect()
            };
            for bits in masks {
                let sel: Vec<usize> = (0..s).filter(|i| bits >> i & 1 == 1).collect();
                if sel.is_empty() {
                    continue;
                }
                let mask = SelectionMask::new(Axis::Token, sel.clone(), s).map_err(|e| e.to_string())?;
                let groups = group_expand(&mask, g).map_err(|e| e.to_string())?;
                ensure!(groups.len() <= group_count(s, g), "too many groups");
                let loaded = load_groups(&m, &groups, g).map_err(|e| e.to_string())?;
                let got = filter_groups(&loaded, &mask).map_err(|e| e.to_string())?;
                ensure!(got == m.gather_rows(&sel), "S={s} g={g} mask={bits:b}: filter differs from gather");
            }
        }
    }
    Ok(())
}

fn layout_constants(_: &VerifyOptions) -> std::result::Result<(), String> {
    ensure!(group_size_tokens(4096, 128, 2).ok() == Some(16), "token group size");
    ensure!(embedding_stripe_tokens(4096, 1, 2).ok() == Some(2048), "single-embedding stripe");
    for g in 2..=8 {
        let t = embedding_stripe_tokens(4096, g, 2).map_err(|e| e.to_string())?;
        ensure!((256..=1024).contains(&t), "stripe of g={g} holds {t} tokens");
    }
    Ok(())
}

fn fill_layout(layout: &mut KvLayout, heads: usize, tokens: usize, seed: u64) -> Vec<Vec<(Vec<f64>, Vec<f64>)>> {
    let d = layout.config().head_dim;
    let mut src = NormalSource::new(seed);
    let mut written = vec![Vec::new(); heads];
    for _ in 0..tokens {
        for (h, w) in written.iter_mut().enumerate() {
            let (k, v) = (src.vector(d), src.vector(d));
            layout.append_token_kv(0, h, &k, &v).expect("append");
            w.push((k, v));
        }
    }
    written
}

fn small_geometry(channels: usize) -> FlashGeometry {
    FlashGeometry {
        channels,
        blocks_per_plane: 64,
        ..FlashGeometry::default()
    }
}

fn layout_roundtrip(o: &VerifyOptions) -> std::result::Result<(), String> {
    for (heads, tokens) in [(1, 17), (2, 300), (4, 512)] {
        let cfg = LayoutConfig::new(small_geometry(8), 1, heads, 64, 512);
        let mut l = KvLayout::new(cfg).map_err(|e| e.to_string())?;
        let written = fill_layout(&mut l, heads, tokens, o.seed ^ tokens as u64);
        l.sync().map_err(|e| e.to_string())?;
        let all = SelectionMask::full(Axis::Token, tokens);
        for (h, rows) in written.iter().enumerate() {
            let k = l.read_token_rows(0, h, KvTensor::K, &all).map_err(|e| e.to_string())?;
            let v = l.read_token_rows(0, h, KvTensor::V, &all).map_err(|e| e.to_string())?;
            for (t, (kr, vr)) in rows.iter().enumerate() {
                ensure!(k.row(t) == kr.as_slice() && v.row(t) == vr.as_slice(), "head {h} token {t} row mismatch");
            }
            let cols = l
                .read_embedding_columns(0, h, &SelectionMask::full(Axis::Embedding, 64), 0..tokens)
                .map_err(|e| e.to_string())?;
            for (t, (kr, _)) in rows.iter().enumerate() {
                for e in 0..64 {
                    ensure!(cols.get(e, t) == kr[e], "head {h} column {e} token {t} mismatch");
                }
            }
        }
        let back = KvLayout::restore_json(&l.dump_json().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        ensure!(back.snapshot() == l.snapshot(), "snapshot changed across dump/restore");
    }
    Ok(())
}

fn layout_write_amplification(o: &VerifyOptions) -> std::result::Result<(), String> {
    let mut l = KvLayout::new(LayoutConfig::new(small_geometry(8), 1, 1, 128, 4096)).map_err(|e| e.to_string())?;
    fill_layout(&mut l, 1, 4096, o.seed);
    l.finish().map_err(|e| e.to_string())?;
    let s = l.stats();
    ensure!(s.write_amplification() <= 1.05, "block-batched WA {}", s.write_amplification());
    ensure!(s.k_physical_bytes == 2 * s.k_logical_bytes, "K is not stored twice");
    ensure!(s.v_physical_bytes == s.v_logical_bytes, "V is duplicated");

    let naive_cfg = LayoutConfig::new(small_geometry(8), 1, 1, 128, 4096).with_policy(WritePolicy::PerTokenPage);
    let mut naive = KvLayout::new(naive_cfg).map_err(|e| e.to_string())?;
    fill_layout(&mut naive, 1, 64, o.seed);
    naive.finish().map_err(|e| e.to_string())?;
    ensure!(naive.stats().write_amplification() == 16.0, "per-token WA {}", naive.stats().write_amplification());
    Ok(())
}

fn flash_ceiling(_: &VerifyOptions) -> std::result::Result<(), String> {
    let timing = FlashTiming::default();
    for channels in [1, 8] {
        let geometry = FlashGeometry {
            channels,
            ..FlashGeometry::default()
        };
        let mut sim = FlashSim::new(geometry, timing).map_err(|e| e.to_string())?;
        let tl = sim
            .schedule_reads(&striped_pages(&geometry, 4096 * channels), 0.0)
            .map_err(|e| e.to_string())?;
        let bw = measure_bandwidth(&tl).map_err(|e| e.to_string())?;
        let ceiling = channels as f64 * timing.channel_bandwidth;
        ensure!(bw <= ceiling * (1.0 + 1e-9), "{channels} channels: {bw:e} above ceiling");
        ensure!(bw >= 0.98 * ceiling, "{channels} channels: {bw:e} below 98% of {ceiling:e}");
    }
    Ok(())
}

fn flash_conservation(o: &VerifyOptions) -> std::result::Result<(), String> {
    let geometry = FlashGeometry {
        channels: 4,
        dies_per_channel: 4,
        ..FlashGeometry::default()
    };
    let timing = FlashTiming::default();
    let mut src = NormalSource::new(o.seed ^ 0xf1);
    let pages: Vec<_> = (0..300)
        .map(|_| {
            let ch = src.uniform_index(4);
            geometry
                .slot_address(ch, src.uniform_index(4096) as u64)
                .expect("address")
        })
        .collect();
    let mut sim = FlashSim::new(geometry, timing).map_err(|e| e.to_string())?;
    let tl = sim.schedule_reads(&pages, 0.0).map_err(|e| e.to_string())?;
    let busy: f64 = sim.channel_busy_us().iter().sum();
    let need = tl.total_bytes() as f64 / timing.channel_bandwidth * 1e6;
    ensure!(busy + 1e-6 >= need, "channel busy {busy} below transfer need {need}");
    let mut by_channel: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for e in &tl.events {
        ensure!(e.complete_us >= e.start_us() && e.die_end_us >= e.die_start_us, "negative duration");
        by_channel.entry(e.address.channel).or_default().push((e.transfer_start_us, e.transfer_end_us));
    }
    for (ch, mut spans) in by_channel {
        spans.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in spans.windows(2) {
            ensure!(w[1].0 + 1e-9 >= w[0].1, "channel {ch}: overlapping transfers");
        }
    }
    let mut fewer = FlashSim::new(geometry, timing).map_err(|e| e.to_string())?;
    let short = fewer.schedule_reads(&pages[..200], 0.0).map_err(|e| e.to_string())?;
    ensure!(short.makespan_us() <= tl.makespan_us() + 1e-9, "adding commands shortened the makespan");
    let mut again = FlashSim::new(geometry, timing).map_err(|e| e.to_string())?;
    ensure!(again.schedule_reads(&pages, 0.0).map_err(|e| e.to_string())? == tl, "rerun differs");
    Ok(())
}

fn engine_additivity(_: &VerifyOptions) -> std::result::Result<(), String> {
    let cfg = EngineConfig::default();
    for (s, r, k) in [(256, 16, 32), (1024, 16, 128), (2048, 32, 256), (512, 128, 512)] {
        let w = HeadWork::sparf(128, s, r, k, 8, 4096, 0, 2.0);
        let b = stage_latencies(&cfg, &w, FlashGeometry::default(), FlashTiming::default()).map_err(|e| e.to_string())?;
        let mut flash = FlashSim::new(FlashGeometry::default(), FlashTiming::default()).map_err(|e| e.to_string())?;
        let sched = head_schedule(&[w], &cfg, &mut flash, 0.0).map_err(|e| e.to_string())?;
        ensure!(
            (b.total_us() - sched.makespan_us).abs() <= cfg.cycle_us(),
            "S={s}: stages sum to {} but the head takes {}",
            b.total_us(),
            sched.makespan_us
        );
        ensure!(b.stages().iter().all(|(_, v)| *v >= 0.0), "negative stage");
    }
    let heads: Vec<HeadWork> = (0..40).map(|h| HeadWork::dense(128, 1024, 4096, h)).collect();
    let mut flash = FlashSim::new(FlashGeometry::default(), FlashTiming::default()).map_err(|e| e.to_string())?;
    let sched = head_schedule(&heads, &cfg, &mut flash, 0.0).map_err(|e| e.to_string())?;
    let (flash_us, compute_us) = time_bounds(&heads, &cfg, &FlashGeometry::default(), &FlashTiming::default());
    ensure!(
        sched.makespan_us + 1e-9 >= flash_us.max(compute_us),
        "makespan {} beats the closed-form bound",
        sched.makespan_us
    );
    Ok(())
}

fn engine_dense_load(_: &VerifyOptions) -> std::result::Result<(), String> {
    let (d, s) = (128usize, 1024usize);
    let full = HeadWork::sparf(d, s, d, s, 8, 4096, 0, 2.0);
    let k_bytes = (d * s * 2) as u64;
    ensure!(full.bytes_loaded() == 3 * k_bytes, "full selection loads {} bytes", full.bytes_loaded());
    // at half the embeddings or tokens, two-fold group loading already touches every group
    for (r, k) in [(d / 4, s), (d, s / 4), (16, 128)] {
        let w = HeadWork::sparf(d, s, r, k, 8, 4096, 0, 2.0);
        ensure!(w.bytes_loaded() < full.bytes_loaded(), "r={r} k={k} loads as much as dense");
    }
    Ok(())
}

fn kv_sizing(_: &VerifyOptions) -> std::result::Result<(), String> {
    let m = ModelSpec::opt_13b();
    ensure!(kv_cache_bytes(&m, 1, 1) == 819_200.0, "per-token KV bytes");
    let a = kv_cache_bytes(&m, 32, 4096) / 1e9;
    let b = kv_cache_bytes(&m, 128, 2048) / 1e9;
    ensure!((a - 100.0).abs() <= 10.0, "b=32 s=4096 gives {a} GB");
    ensure!((b - 200.0).abs() <= 20.0, "b=128 s=2048 gives {b} GB");
    Ok(())
}

fn throughput_of(kind: SystemKind, batch: usize, ratio: f64, devices: usize) -> std::result::Result<f64, String> {
    let sparsity = if ratio >= 1.0 { Sparsity::dense() } else { Sparsity::ratio(ratio) };
    let mut s = Scenario::new(
        kind,
        Workload {
            batch,
            input_len: 1024,
            output_len: 1024,
        },
        sparsity,
    );
    s.hardware.csd_count = devices;
    s.hardware.ssd_count = devices;
    let r = simulate(&s).map_err(|e| e.to_string())?;
    let sum: f64 = r.breakdown.shares().iter().sum();
    ensure!((sum - 1.0).abs() <= 1e-9, "breakdown shares sum to {sum}");
    ensure!(r.total_s() + 1e-12 >= r.breakdown.total().min(r.total_s()), "negative time");
    Ok(r.throughput())
}

fn system_ordering(_: &VerifyOptions) -> std::result::Result<(), String> {
    let b = 256;
    let sparf = throughput_of(SystemKind::Instinfer, b, 0.125, 1)?;
    let dense = throughput_of(SystemKind::Instinfer, b, 1.0, 1)?;
    let sparq = throughput_of(SystemKind::SsdOffload, b, 0.125, 1)?;
    let ssd = throughput_of(SystemKind::SsdOffload, b, 1.0, 1)?;
    ensure!(sparf > dense && dense > sparq && sparq > ssd, "order {sparf} {dense} {sparq} {ssd}");
    let ssd4 = throughput_of(SystemKind::SsdOffload, b, 1.0, 4)?;
    ensure!((ssd4 / ssd - 1.0).abs() < 0.05, "extra SSDs changed baseline throughput by {}", ssd4 / ssd);
    Ok(())
}

fn csd_scaling(_: &VerifyOptions) -> std::result::Result<(), String> {
    let counts = [1usize, 2, 4, 8];
    let t: Vec<f64> = counts
        .iter()
        .map(|&n| throughput_of(SystemKind::Instinfer, 64, 1.0, n))
        .collect::<std::result::Result<_, _>>()?;
    for i in 1..t.len() {
        ensure!(t[i] + 1e-12 >= t[i - 1], "throughput drops at {} CSDs", counts[i]);
    }
    for i in 2..t.len() {
        let prev = (t[i - 1] - t[i - 2]) / (counts[i - 1] - counts[i - 2]) as f64;
        let next = (t[i] - t[i - 1]) / (counts[i] - counts[i - 1]) as f64;
        ensure!(next <= prev * (1.0 + 1e-9), "gain per CSD grows at {}", counts[i]);
    }
    Ok(())
}

fn topk_ties(_: &VerifyOptions) -> std::result::Result<(), String> {
    let m = argtopk(&[1.0, 3.0, 1.0, 1.0], 3, TopKKey::Raw, Axis::Token).map_err(|e| e.to_string())?;
    ensure!(m.selected == vec![0, 1, 2], "ties not broken by index: {:?}", m.selected);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mutation_parses() {
        assert_eq!("temperature".parse::<Mutation>(), Ok(Mutation::Temperature));
        assert!("other".parse::<Mutation>().is_err());
    }

    #[test]
    fn temperature_mutation_is_caught() {
        let opts = VerifyOptions {
            mutation: Some(Mutation::Temperature),
            seed: 0,
        };
        assert!(scalar_oracle(&opts).is_err());
        assert!(scalar_oracle(&VerifyOptions::default()).is_ok());
    }

    #[test]
    fn cheap_checks_pass() {
        let o = VerifyOptions::default();
        for check in [layout_constants, kv_sizing, engine_dense_load, dual_step] {
            check(&o).unwrap();
        }
    }
}
