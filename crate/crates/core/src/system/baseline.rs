use super::{
    kv_cache_bytes, linear_layer_cost, operator_cost, prefill_layer_compute, prefill_time, Breakdown, KvTier, Operator,
    Phase, Scenario, ScenarioReport, SystemKind,
};
use crate::error::{Error, Result};

/// Fraction of the KV cache a SparQ-style gather reads: `ratio` of the K columns plus
/// `ratio` of the K and V rows.
pub(crate) fn sparq_read_fraction(ratio: f64) -> f64 {
    (1.5 * ratio).min(1.0)
}

/// The first tier that holds the whole KV cache at its final length.
fn place_kv(s: &Scenario, kv_bytes: f64) -> Result<KvTier> {
    let vram = s.vram_kv_budget()?;
    if kv_bytes <= vram {
        return Ok(KvTier::Vram);
    }
    if s.system == SystemKind::HostOffload && kv_bytes <= s.hardware.host_memory_bytes {
        return Ok(KvTier::Host);
    }
    Ok(KvTier::Ssd)
}

fn move_time(s: &Scenario, tier: KvTier, bytes: f64) -> f64 {
    match tier {
        KvTier::Vram | KvTier::Csd => 0.0,
        KvTier::Host => bytes / s.hardware.pcie_gpu_host,
        KvTier::Ssd => s.hardware.ssd_path_time(bytes),
    }
}

/// GPU-centric offloading: attention runs on the GPU over KV fetched from its tier, and
/// fetches overlap the layer's GPU work.
pub fn simulate_baseline(s: &Scenario) -> Result<ScenarioReport> {
    s.validate()?;
    if s.system == SystemKind::Instinfer {
        return Err(Error::config("simulate_baseline needs an offloading system kind"));
    }
    let (m, hw, w) = (&s.model, &s.hardware, &s.workload);
    let layers = m.layers as f64;
    let tier = place_kv(s, kv_cache_bytes(m, w.batch, w.max_context()))?;
    let frac = if s.sparsity.is_dense() {
        1.0
    } else {
        sparq_read_fraction(s.sparsity.ratio)
    };

    let layer_compute = prefill_layer_compute(m, w, hw);
    let layer_push = move_time(s, tier, kv_cache_bytes(m, w.batch, w.input_len) / layers);
    let prefill_s = prefill_time(&vec![layer_compute; m.layers], &vec![layer_push; m.layers]);

    let linear = linear_layer_cost(m, Phase::Decode, w.batch, 1, hw);
    let mut breakdown = Breakdown::default();
    let mut decode_s = 0.0;
    for t in 0..w.output_len {
        let ctx = w.input_len + t + 1;
        let logit = operator_cost(Operator::Logit, Phase::Decode, m, w.batch, ctx, hw);
        let attend = operator_cost(Operator::Attend, Phase::Decode, m, w.batch, ctx, hw);
        let mut layer = linear;
        let layer_time = if tier == KvTier::Vram {
            let read = (logit.bytes + attend.bytes) * frac / hw.gpu_vram_bandwidth;
            let math = (logit.flops + attend.flops) * frac / hw.gpu_peak_flops;
            if read >= math {
                layer.kv_access += read;
            } else {
                layer.compute += math;
            }
            layer.total()
        } else {
            let bytes = kv_cache_bytes(m, w.batch, ctx) / layers * frac;
            let io = move_time(s, tier, bytes);
            layer.compute += (logit.flops + attend.flops) * frac / hw.gpu_peak_flops;
            let gpu = layer.total();
            layer.kv_access += io;
            gpu.max(io)
        };
        decode_s += layer_time * layers;
        breakdown.add(&layer.scaled(layers));
    }

    let kv_in_vram = if tier == KvTier::Vram {
        kv_cache_bytes(m, w.batch, w.max_context())
    } else {
        0.0
    };
    Ok(ScenarioReport {
        system: s.system,
        csd_count: 0,
        workload: *w,
        ratio: s.sparsity.ratio,
        prefill_s,
        decode_s,
        breakdown,
        peak_vram_bytes: m.weight_bytes() + hw.gpu_workspace_bytes + kv_in_vram,
        kv_tier: tier,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{Sparsity, Workload};

    fn ssd(batch: usize, sparsity: Sparsity) -> Scenario {
        Scenario::new(
            SystemKind::SsdOffload,
            Workload {
                batch,
                input_len: 1024,
                output_len: 16,
            },
            sparsity,
        )
    }

    #[test]
    fn large_batch_is_kv_bound() {
        let r = simulate_baseline(&ssd(64, Sparsity::dense())).unwrap();
        assert_eq!(r.kv_tier, KvTier::Ssd);
        assert!(r.breakdown.shares()[1] >= 0.95, "{:?}", r.breakdown.shares());
    }

    #[test]
    fn small_batch_is_weight_bound() {
        let r = simulate_baseline(&ssd(2, Sparsity::dense())).unwrap();
        assert_eq!(r.kv_tier, KvTier::Vram);
        let sh = r.breakdown.shares();
        assert!(sh[1] <= 0.10, "{sh:?}");
        assert!(sh[0] > 0.5);
    }

    #[test]
    fn sparq_reads_less() {
        let dense = simulate_baseline(&ssd(64, Sparsity::dense())).unwrap();
        let sparse = simulate_baseline(&ssd(64, Sparsity::ratio(0.125))).unwrap();
        assert!(sparse.throughput() > dense.throughput());
        assert_eq!(sparq_read_fraction(0.125), 3.0 / 16.0);
    }

    #[test]
    fn host_spill_collapses_throughput() {
        let mut fits = ssd(32, Sparsity::dense());
        fits.system = SystemKind::HostOffload;
        let mut spills = fits.clone();
        spills.workload.batch = 64;
        let a = simulate_baseline(&fits).unwrap();
        let b = simulate_baseline(&spills).unwrap();
        assert_eq!(a.kv_tier, KvTier::Host);
        assert_eq!(b.kv_tier, KvTier::Ssd);
        assert!(a.throughput() > 10.0 * b.throughput());
    }

    #[test]
    fn zero_output_is_prefill_only() {
        let mut s = ssd(4, Sparsity::dense());
        s.workload.output_len = 0;
        let r = simulate_baseline(&s).unwrap();
        assert_eq!(r.decode_s, 0.0);
        assert!(r.prefill_s > 0.0);
        assert_eq!(r.throughput(), 0.0);
    }

    #[test]
    fn extra_ssds_barely_help() {
        let one = simulate_baseline(&ssd(128, Sparsity::dense())).unwrap();
        let mut s = ssd(128, Sparsity::dense());
        s.hardware.ssd_count = 4;
        let four = simulate_baseline(&s).unwrap();
        assert!(four.throughput() / one.throughput() < 1.05);
    }
}
