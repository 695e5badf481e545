use proptest::prelude::*;

use sparfsim::attention::{
    dense_attention, filter_groups, group_expand, load_groups, sparf_attention, sparq_attention, Axis, HeadConfig,
    HeadTensors, SelectionMask,
};
use sparfsim::oracle::sparf_scalar;
use sparfsim::tensor::NormalSource;

fn groups() -> impl Strategy<Value = usize> {
    prop::sample::select(vec![1usize, 2, 4, 8, 16])
}

prop_compose! {
    fn head_case()(d in 2usize..=64, s in 1usize..=160, seed in any::<u64>())
        (r in 1..=d, k in 1..=s, m in groups(), n in groups(), d in Just(d), s in Just(s), seed in Just(seed))
        -> (HeadTensors, HeadConfig)
    {
        let cfg = HeadConfig {
            head_dim: d,
            seq_len: s,
            kept_embeddings: r,
            kept_tokens: k,
            embedding_group: m.min(d),
            token_group: n.min(s),
        };
        (HeadTensors::random(seed, d, s), cfg)
    }
}

fn max_dev(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn scores_normalize_and_alpha_is_a_mass((t, cfg) in head_case()) {
        let r = sparf_attention(&t, &cfg).unwrap();
        let sum: f64 = r.approx_scores.iter().sum();
        prop_assert!((sum - 1.0).abs() <= 1e-6);
        prop_assert!((0.0..=1.0).contains(&r.alpha));
    }

    #[test]
    fn matches_scalar_transcription((t, cfg) in head_case()) {
        let r = sparf_attention(&t, &cfg).unwrap();
        let (out, alpha) = sparf_scalar(
            &t.query, &t.keys, &t.values, &t.value_mean,
            cfg.kept_embeddings, cfg.kept_tokens, cfg.embedding_group, cfg.token_group,
        );
        prop_assert!(max_dev(&r.out, &out) <= 1e-9);
        prop_assert!((r.alpha - alpha).abs() <= 1e-9);
    }

    #[test]
    fn unit_groups_equal_sparq((t, mut cfg) in head_case()) {
        cfg.embedding_group = 1;
        cfg.token_group = 1;
        let a = sparf_attention(&t, &cfg).unwrap();
        let b = sparq_attention(&t, cfg.kept_embeddings, cfg.kept_tokens).unwrap();
        prop_assert!(max_dev(&a.out, &b.out) <= 1e-9);
        prop_assert_eq!(a.tokens, b.tokens);
        prop_assert_eq!(a.embeddings, b.embeddings);
    }

    #[test]
    fn page_groups_never_change_the_output((t, cfg) in head_case()) {
        let a = sparf_attention(&t, &cfg).unwrap();
        let b = sparq_attention(&t, cfg.kept_embeddings, cfg.kept_tokens).unwrap();
        prop_assert!(max_dev(&a.out, &b.out) <= 1e-9);
    }

    #[test]
    fn full_selection_is_dense((t, cfg) in head_case()) {
        let full = HeadConfig { kept_embeddings: cfg.head_dim, kept_tokens: cfg.seq_len, ..cfg };
        let a = sparf_attention(&t, &full).unwrap();
        let d = dense_attention(&t).unwrap();
        let norm = d.iter().map(|x| x * x).sum::<f64>().sqrt().max(1e-300);
        let err = a.out.iter().zip(&d).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt() / norm;
        prop_assert!(err <= 1e-6, "relative error {}", err);
        prop_assert_eq!(a.traces[1].bytes_over_channel, a.traces[1].dense_bytes);
    }

    #[test]
    fn traces_are_ordered_and_deterministic((t, cfg) in head_case()) {
        let a = sparf_attention(&t, &cfg).unwrap();
        for tr in &a.traces {
            prop_assert!(tr.bytes_after_filter <= tr.bytes_over_channel);
            prop_assert!(tr.bytes_over_channel <= tr.dense_bytes);
        }
        let b = sparf_attention(&t, &cfg).unwrap();
        prop_assert_eq!(a.out.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), b.out.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        prop_assert_eq!(a.traces, b.traces);
    }

    #[test]
    fn filter_after_group_load_is_a_gather(
        s in 1usize..=64,
        g in groups(),
        bits in any::<u64>(),
        seed in any::<u64>(),
    ) {
        let sel: Vec<usize> = (0..s).filter(|i| bits >> i & 1 == 1).collect();
        prop_assume!(!sel.is_empty());
        let m = NormalSource::new(seed).matrix(s, 5);
        let mask = SelectionMask::new(Axis::Token, sel.clone(), s).unwrap();
        let loaded = load_groups(&m, &group_expand(&mask, g).unwrap(), g).unwrap();
        prop_assert_eq!(filter_groups(&loaded, &mask).unwrap(), m.gather_rows(&sel));
    }
}
