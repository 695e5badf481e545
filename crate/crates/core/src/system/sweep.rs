//! Scenario sweeps and the results CSV.

use std::io::Write;

use rayon::prelude::*;

use super::{simulate, Scenario, ScenarioReport};
use crate::error::{Error, Result};

pub const SCHEMA_LINE: &str = "# sparfsim-results v1";

pub const COLUMNS: [&str; 19] = [
    "id",
    "system",
    "csd_count",
    "batch",
    "input_len",
    "output_len",
    "ratio",
    "prefill_s",
    "decode_s",
    "decode_per_token_s",
    "throughput_tok_s",
    "weight_share",
    "kv_share",
    "compute_share",
    "transfer_share",
    "kv_access_s",
    "peak_vram_bytes",
    "kv_tier",
    "seed",
];

/// A scenario with the identifier its CSV row carries.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepItem {
    pub id: String,
    pub scenario: Scenario,
}

/// Simulates every item concurrently; results keep input order. The first failure is
/// returned tagged with its item id.
pub fn run_sweep(items: &[SweepItem]) -> Result<Vec<ScenarioReport>> {
    items
        .par_iter()
        .map(|it| {
            simulate(&it.scenario).map_err(|e| Error::Scenario {
                id: it.id.clone(),
                source: Box::new(e),
            })
        })
        .collect()
}

fn fmt(v: f64) -> String {
    format!("{v:.9e}")
}

pub fn row(id: &str, seed: u64, r: &ScenarioReport) -> Vec<String> {
    let sh = r.breakdown.shares();
    vec![
        id.to_string(),
        r.system.name().to_string(),
        r.csd_count.to_string(),
        r.workload.batch.to_string(),
        r.workload.input_len.to_string(),
        r.workload.output_len.to_string(),
        fmt(r.ratio),
        fmt(r.prefill_s),
        fmt(r.decode_s),
        fmt(r.decode_per_token_s()),
        fmt(r.throughput()),
        fmt(sh[0]),
        fmt(sh[1]),
        fmt(sh[2]),
        fmt(sh[3]),
        fmt(r.breakdown.kv_access),
        fmt(r.peak_vram_bytes),
        r.kv_tier.name().to_string(),
        seed.to_string(),
    ]
}

/// Schema comment, header, then one row per report.
pub fn write_csv<W: Write>(mut out: W, items: &[SweepItem], reports: &[ScenarioReport]) -> Result<()> {
    writeln!(out, "{SCHEMA_LINE}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(COLUMNS)?;
    for (it, r) in items.iter().zip(reports) {
        w.write_record(row(&it.id, it.scenario.seed, r))?;
    }
    w.flush()?;
    Ok(())
}
