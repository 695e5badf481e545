use proptest::prelude::*;

use sparfsim::system::{kv_cache_bytes, simulate, ModelSpec, Scenario, Sparsity, SystemKind, Workload};

fn system() -> impl Strategy<Value = SystemKind> {
    prop::sample::select(vec![SystemKind::Instinfer, SystemKind::HostOffload, SystemKind::SsdOffload])
}

fn scenario(kind: SystemKind, batch: usize, input_len: usize, output_len: usize, ratio: f64, csds: usize) -> Scenario {
    let sparsity = if ratio >= 1.0 { Sparsity::dense() } else { Sparsity::ratio(ratio) };
    Scenario::new(kind, Workload { batch, input_len, output_len }, sparsity).with_csds(csds)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn time_covers_every_component(
        kind in system(),
        batch in 1usize..=64,
        input_len in 16usize..=512,
        output_len in 0usize..=16,
        ratio in prop::sample::select(vec![1.0, 0.5, 0.25, 0.125]),
        csds in 1usize..=4,
    ) {
        let r = simulate(&scenario(kind, batch, input_len, output_len, ratio, csds)).unwrap();
        let b = r.breakdown;
        for part in [b.weight_access, b.kv_access, b.compute, b.transfer] {
            prop_assert!(part >= 0.0);
            prop_assert!(part <= r.decode_s * (1.0 + 1e-9) + 1e-12);
        }
        prop_assert!(r.prefill_s > 0.0 && r.decode_s >= 0.0);
        if output_len > 0 {
            let sum: f64 = b.shares().iter().sum();
            prop_assert!((sum - 1.0).abs() < 1e-9);
            let thr = (batch * output_len) as f64 / (r.prefill_s + r.decode_s);
            prop_assert!((r.throughput() - thr).abs() <= 1e-9 * thr);
        } else {
            prop_assert_eq!(r.throughput(), 0.0);
        }
    }

    #[test]
    fn more_csds_never_hurt(batch in 1usize..=32, input_len in 64usize..=512, ratio in prop::sample::select(vec![1.0, 0.125])) {
        let t: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&n| simulate(&scenario(SystemKind::Instinfer, batch, input_len, 4, ratio, n)).unwrap().throughput())
            .collect();
        prop_assert!(t[1] + 1e-12 >= t[0] && t[2] + 1e-12 >= t[1], "{:?}", t);
    }

    #[test]
    fn kv_bytes_are_linear(b in 1usize..=512, s in 1usize..=8192) {
        let m = ModelSpec::opt_13b();
        prop_assert_eq!(kv_cache_bytes(&m, b, s), 819_200.0 * (b * s) as f64);
    }

    #[test]
    fn runs_are_deterministic(kind in system(), batch in 1usize..=16, seed in any::<u64>()) {
        let mut s = scenario(kind, batch, 128, 4, 0.125, 1);
        s.seed = seed;
        prop_assert_eq!(simulate(&s).unwrap(), simulate(&s).unwrap());
    }
}
