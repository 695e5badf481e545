use std::collections::BTreeMap;

use proptest::prelude::*;

use sparfsim::flash::{measure_bandwidth, striped_pages, EventTimeline, FlashSim, FlashTiming};
use sparfsim::layout::{FlashGeometry, PhysicalPageAddress};

fn geometry() -> FlashGeometry {
    FlashGeometry {
        channels: 4,
        dies_per_channel: 4,
        blocks_per_plane: 16,
        ..FlashGeometry::default()
    }
}

fn addresses() -> impl Strategy<Value = Vec<PhysicalPageAddress>> {
    let g = geometry();
    prop::collection::vec((0..g.channels, 0u64..g.pages_per_channel()), 1..120)
        .prop_map(move |v| v.into_iter().map(|(c, s)| g.slot_address(c, s).unwrap()).collect())
}

fn reads(pages: &[PhysicalPageAddress]) -> (FlashSim, EventTimeline) {
    let mut sim = FlashSim::new(geometry(), FlashTiming::default()).unwrap();
    let tl = sim.schedule_reads(pages, 0.0).unwrap();
    (sim, tl)
}

fn spans(tl: &EventTimeline, key: impl Fn(&PhysicalPageAddress) -> usize, die: bool) -> BTreeMap<usize, Vec<(f64, f64)>> {
    let mut out: BTreeMap<usize, Vec<(f64, f64)>> = BTreeMap::new();
    for e in &tl.events {
        let span = if die { (e.die_start_us, e.die_end_us) } else { (e.transfer_start_us, e.transfer_end_us) };
        out.entry(key(&e.address)).or_default().push(span);
    }
    for v in out.values_mut() {
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn channel_time_covers_the_bytes(pages in addresses()) {
        let (sim, tl) = reads(&pages);
        let busy: f64 = sim.channel_busy_us().iter().sum();
        let need = tl.total_bytes() as f64 / FlashTiming::default().channel_bandwidth * 1e6;
        prop_assert!(busy + 1e-6 >= need);
        prop_assert!(tl.events.iter().all(|e| e.die_end_us >= e.die_start_us && e.complete_us >= e.transfer_start_us));
    }

    #[test]
    fn no_resource_is_double_booked(pages in addresses()) {
        let (_, tl) = reads(&pages);
        let dies = geometry().dies_per_channel;
        for v in spans(&tl, |a| a.channel, false).values().chain(spans(&tl, |a| a.channel * dies + a.die, true).values()) {
            for w in v.windows(2) {
                prop_assert!(w[1].0 + 1e-9 >= w[0].1);
            }
        }
    }

    #[test]
    fn channels_never_idle_past_a_ready_transfer(pages in addresses()) {
        let (_, tl) = reads(&pages);
        let xfer = FlashTiming::default().transfer_us(geometry().page_size);
        let by_channel = spans(&tl, |a| a.channel, false);
        for e in &tl.events {
            let busy = &by_channel[&e.address.channel];
            let mut gap_start = 0.0f64;
            for &(s, end) in busy {
                if s >= e.transfer_start_us - 1e-9 {
                    break;
                }
                let usable_from = gap_start.max(e.die_end_us);
                prop_assert!(usable_from + xfer > s + 1e-9, "transfer could have started at {}", usable_from);
                gap_start = gap_start.max(end);
            }
        }
    }

    #[test]
    fn more_commands_never_finish_sooner(pages in addresses(), cut in any::<prop::sample::Index>()) {
        let n = 1 + cut.index(pages.len());
        let (_, full) = reads(&pages);
        let (_, prefix) = reads(&pages[..n]);
        prop_assert!(prefix.makespan_us() <= full.makespan_us() + 1e-9);
        prop_assert_eq!(&full.events[..n], &prefix.events[..]);
    }

    #[test]
    fn identical_commands_identical_timelines(pages in addresses()) {
        prop_assert_eq!(reads(&pages).1, reads(&pages).1);
    }

    #[test]
    fn bandwidth_stays_under_the_ceiling(pages in addresses()) {
        let (_, tl) = reads(&pages);
        let bw = measure_bandwidth(&tl).unwrap();
        prop_assert!(bw <= geometry().channels as f64 * FlashTiming::default().channel_bandwidth * (1.0 + 1e-9));
    }
}

#[test]
fn long_balanced_streams_approach_the_ceiling() {
    let g = FlashGeometry::default();
    let mut sim = FlashSim::new(g, FlashTiming::default()).unwrap();
    let tl = sim.schedule_reads(&striped_pages(&g, 8 * 2048), 0.0).unwrap();
    let bw = measure_bandwidth(&tl).unwrap();
    assert!(bw >= 0.95 * 8.0 * 1.4e9, "{bw:e}");
}
