use std::collections::BTreeMap;

use proptest::prelude::*;

use sparfsim::attention::{Axis, SelectionMask};
use sparfsim::flash::{FlashSim, FlashTiming};
use sparfsim::layout::{FlashGeometry, KvLayout, KvTensor, LayoutConfig, TokenGroupKey};
use sparfsim::tensor::NormalSource;

fn geometry(channels: usize) -> FlashGeometry {
    FlashGeometry {
        channels,
        dies_per_channel: 4,
        blocks_per_plane: 64,
        ..FlashGeometry::default()
    }
}

type Written = Vec<Vec<(Vec<f64>, Vec<f64>)>>;

fn fill(l: &mut KvLayout, heads: usize, tokens: usize, seed: u64) -> Written {
    let d = l.config().head_dim;
    let mut src = NormalSource::new(seed);
    let mut out = vec![Vec::new(); heads];
    for _ in 0..tokens {
        for (h, w) in out.iter_mut().enumerate() {
            let (k, v) = (src.vector(d), src.vector(d));
            l.append_token_kv(0, h, &k, &v).unwrap();
            w.push((k, v));
        }
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn lookups_return_written_rows_and_columns(
        heads in 1usize..=4,
        tokens in 1usize..=512,
        channels in prop::sample::select(vec![1usize, 2, 4, 8]),
        seed in any::<u64>(),
        picks in prop::collection::vec(any::<prop::sample::Index>(), 1..24),
    ) {
        let mut l = KvLayout::new(LayoutConfig::new(geometry(channels), 1, heads, 64, 512)).unwrap();
        let written = fill(&mut l, heads, tokens, seed);
        l.sync().unwrap();
        let mut sel: Vec<usize> = picks.iter().map(|p| p.index(tokens)).collect();
        sel.sort_unstable();
        sel.dedup();
        let mask = SelectionMask::new(Axis::Token, sel.clone(), tokens).unwrap();
        let emb = SelectionMask::new(Axis::Embedding, vec![0, 7, 31, 63], 64).unwrap();
        for (h, rows) in written.iter().enumerate() {
            let k = l.read_token_rows(0, h, KvTensor::K, &mask).unwrap();
            let v = l.read_token_rows(0, h, KvTensor::V, &mask).unwrap();
            for (i, &t) in sel.iter().enumerate() {
                prop_assert_eq!(k.row(i), rows[t].0.as_slice());
                prop_assert_eq!(v.row(i), rows[t].1.as_slice());
            }
            let cols = l.read_embedding_columns(0, h, &emb, 0..tokens).unwrap();
            for (i, &e) in emb.selected.iter().enumerate() {
                for (t, row) in rows.iter().enumerate() {
                    prop_assert_eq!(cols.get(i, t), row.0[e]);
                }
            }
        }
    }

    #[test]
    fn consecutive_groups_balance_channels(
        channels in prop::sample::select(vec![2usize, 4, 8]),
        head in 0usize..4,
        first in 0usize..8,
        extra in 0usize..12,
    ) {
        let groups = channels + extra;
        let tokens = 16 * (first + groups);
        let mut l = KvLayout::new(LayoutConfig::new(geometry(channels), 1, 4, 128, 4096)).unwrap();
        fill(&mut l, 4, tokens, 1);
        l.sync().unwrap();
        let mut per_channel = vec![0usize; channels];
        for g in first..first + groups {
            let a = l.token_page(&TokenGroupKey { layer: 0, head, tensor: KvTensor::K, group_id: g }).unwrap();
            per_channel[a.channel] += 1;
        }
        let (lo, hi) = (per_channel.iter().min().unwrap(), per_channel.iter().max().unwrap());
        prop_assert!(hi - lo <= 1, "{:?}", per_channel);
    }

    #[test]
    fn k_is_stored_twice_and_wa_is_bounded(
        heads in 1usize..=3,
        tokens in 1usize..=1200,
        channels in prop::sample::select(vec![1usize, 4, 8]),
    ) {
        let g = geometry(channels);
        let mut l = KvLayout::new(LayoutConfig::new(g, 1, heads, 128, 4096)).unwrap();
        fill(&mut l, heads, tokens, 2);
        l.sync().unwrap();
        let s = l.stats();
        // the embedding copy lags by at most one open stripe per head
        let open_stripe = (l.config().stripe_tokens() * 128 * 2 * heads) as u64;
        prop_assert!(s.k_physical_bytes <= 2 * s.k_logical_bytes);
        prop_assert!(2 * s.k_logical_bytes - s.k_physical_bytes <= open_stripe);
        prop_assert_eq!(s.v_physical_bytes, s.v_logical_bytes);
        l.finish().unwrap();
        let s = l.stats();
        let page = g.page_size as u64;
        // finish pads one K group, one V group and one stripe per embedding group, per head
        let slack = (2 + l.config().embedding_groups() as u64) * page * heads as u64;
        prop_assert!(s.k_physical_bytes >= 2 * s.k_logical_bytes);
        prop_assert!(s.k_physical_bytes + s.v_physical_bytes <= 2 * s.k_logical_bytes + s.v_logical_bytes + slack);
        let bound = 1.0 + (channels as f64 * g.block_bytes() as f64) / s.logical_bytes.max(1) as f64;
        prop_assert!(s.write_amplification() <= bound, "wa {} bound {}", s.write_amplification(), bound);
    }

    #[test]
    fn every_read_is_one_page(tokens in 16usize..=600, picks in prop::collection::vec(any::<prop::sample::Index>(), 1..40)) {
        let g = geometry(8);
        let mut l = KvLayout::new(LayoutConfig::new(g, 1, 1, 128, 4096)).unwrap();
        fill(&mut l, 1, tokens, 3);
        l.sync().unwrap();
        let mut sel: Vec<usize> = picks.iter().map(|p| p.index(tokens)).collect();
        sel.sort_unstable();
        sel.dedup();
        let mask = SelectionMask::new(Axis::Token, sel, tokens).unwrap();
        let pages = l.lookup_token_pages(0, 0, &mask, KvTensor::V).unwrap().pages;
        let emb = SelectionMask::new(Axis::Embedding, vec![1, 90], 128).unwrap();
        let cols = l.lookup_embedding_pages(0, 0, &emb, 0..tokens).unwrap().pages;
        let mut sim = FlashSim::new(g, FlashTiming::default()).unwrap();
        let tl = sim.schedule_reads(&[pages, cols].concat(), 0.0).unwrap();
        prop_assert!(tl.events.iter().all(|e| e.bytes == g.page_size as u64));
    }

    #[test]
    fn dump_and_restore_is_lossless(heads in 1usize..=3, tokens in 1usize..=300) {
        let mut l = KvLayout::new(LayoutConfig::new(geometry(4), 1, heads, 64, 512)).unwrap();
        fill(&mut l, heads, tokens, 4);
        l.sync().unwrap();
        let back = KvLayout::restore_json(&l.dump_json().unwrap()).unwrap();
        prop_assert_eq!(back.snapshot(), l.snapshot());
        let mut by_channel: BTreeMap<usize, usize> = BTreeMap::new();
        for (_, a) in &l.snapshot().token_table {
            *by_channel.entry(a.channel).or_default() += 1;
        }
        prop_assert!(by_channel.keys().all(|&c| c < 4));
    }
}
