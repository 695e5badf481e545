//! Named sweep grids.

use crate::error::{Error, Result};
use crate::system::sweep::SweepItem;
use crate::system::{Scenario, Sparsity, SystemKind, Workload};

pub const PRESETS: [&str; 4] = ["fig-throughput", "fig-breakdown", "fig-scaling", "fig-compression"];

pub const THROUGHPUT_BATCHES: [usize; 7] = [4, 8, 16, 32, 64, 128, 256];
pub const BREAKDOWN_BATCHES: [usize; 3] = [4, 64, 256];
pub const SCALING_CSDS: [usize; 7] = [1, 2, 4, 8, 12, 16, 20];
pub const COMPRESSION_RATIOS: [f64; 4] = [1.0, 0.5, 0.25, 0.125];

const SEQ_LEN: usize = 1024;
const SPARSE_RATIO: f64 = 0.125;
const LARGE_BATCH: usize = 256;

fn workload(batch: usize) -> Workload {
    Workload {
        batch,
        input_len: SEQ_LEN,
        output_len: SEQ_LEN,
    }
}

fn item(id: String, system: SystemKind, batch: usize, ratio: f64, devices: usize, seed: u64) -> SweepItem {
    let sparsity = if ratio >= 1.0 { Sparsity::dense() } else { Sparsity::ratio(ratio) };
    let mut scenario = Scenario::new(system, workload(batch), sparsity);
    scenario.hardware.csd_count = devices;
    scenario.hardware.ssd_count = devices;
    scenario.seed = seed;
    SweepItem { id, scenario }
}

fn ratio_tag(ratio: f64) -> String {
    if ratio >= 1.0 {
        "dense".into()
    } else {
        format!("1/{}", (1.0 / ratio).round() as u64)
    }
}

/// The five systems compared at each batch size.
fn throughput(seed: u64) -> Vec<SweepItem> {
    let systems = [
        ("host-offload", SystemKind::HostOffload, 1.0),
        ("ssd-offload", SystemKind::SsdOffload, 1.0),
        ("ssd-offload-sparq", SystemKind::SsdOffload, SPARSE_RATIO),
        ("instinfer-dense", SystemKind::Instinfer, 1.0),
        ("instinfer-sparf", SystemKind::Instinfer, SPARSE_RATIO),
    ];
    let mut out = Vec::new();
    for b in THROUGHPUT_BATCHES {
        for (name, kind, ratio) in systems {
            out.push(item(format!("{name}/bs{b}"), kind, b, ratio, 1, seed));
        }
    }
    out
}

fn breakdown(seed: u64) -> Vec<SweepItem> {
    let mut out = Vec::new();
    for ratio in [1.0, SPARSE_RATIO] {
        for b in BREAKDOWN_BATCHES {
            let tag = ratio_tag(ratio);
            out.push(item(format!("ssd-offload/{tag}/bs{b}"), SystemKind::SsdOffload, b, ratio, 1, seed));
            out.push(item(format!("instinfer/{tag}/bs{b}"), SystemKind::Instinfer, b, ratio, 1, seed));
            out.push(item(format!("instinfer-2/{tag}/bs{b}"), SystemKind::Instinfer, b, ratio, 2, seed));
        }
    }
    out
}

fn scaling(seed: u64) -> Vec<SweepItem> {
    let mut out = Vec::new();
    for ratio in [1.0, SPARSE_RATIO] {
        for n in SCALING_CSDS {
            let id = format!("instinfer/{}/csd{n}", ratio_tag(ratio));
            out.push(item(id, SystemKind::Instinfer, LARGE_BATCH, ratio, n, seed));
        }
    }
    out
}

fn compression(seed: u64) -> Vec<SweepItem> {
    let mut out = Vec::new();
    for n in [1, 2] {
        for ratio in COMPRESSION_RATIOS {
            let id = format!("instinfer/{}/csd{n}", ratio_tag(ratio));
            out.push(item(id, SystemKind::Instinfer, LARGE_BATCH, ratio, n, seed));
        }
    }
    out
}

pub fn preset(name: &str, seed: u64) -> Result<Vec<SweepItem>> {
    match name {
        "fig-throughput" => Ok(throughput(seed)),
        "fig-breakdown" => Ok(breakdown(seed)),
        "fig-scaling" => Ok(scaling(seed)),
        "fig-compression" => Ok(compression(seed)),
        _ => Err(Error::Config(format!(
            "unknown preset `{name}` (expected one of {})",
            PRESETS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_sizes() {
        assert_eq!(preset("fig-throughput", 0).unwrap().len(), 35);
        assert_eq!(preset("fig-breakdown", 0).unwrap().len(), 18);
        assert_eq!(preset("fig-scaling", 0).unwrap().len(), 14);
        assert_eq!(preset("fig-compression", 0).unwrap().len(), 8);
    }

    #[test]
    fn scaling_covers_csd_counts() {
        let counts: Vec<usize> = preset("fig-scaling", 0)
            .unwrap()
            .iter()
            .take(7)
            .map(|i| i.scenario.hardware.csd_count)
            .collect();
        assert_eq!(counts, SCALING_CSDS);
    }

    #[test]
    fn unknown_name_is_an_error() {
        let err = preset("fig-nope", 0).unwrap_err().to_string();
        assert!(err.contains("fig-nope"));
    }

    #[test]
    fn ids_are_unique() {
        for name in PRESETS {
            let items = preset(name, 3).unwrap();
            let ids: std::collections::BTreeSet<_> = items.iter().map(|i| i.id.clone()).collect();
            assert_eq!(ids.len(), items.len(), "{name}");
            assert!(items.iter().all(|i| i.scenario.seed == 3));
        }
    }
}
