//! Library side of the command-line tool.

pub mod accuracy;
pub mod config;
pub mod presets;
pub mod verify;

use std::io::Write;

use crate::engine::{stage_latencies, AttentionMode};
use crate::error::{Error, Result};
use crate::system::{head_work, Scenario, SystemKind};

/// Critical-path stages of one decode head at the final context length, as
/// `(stage, µs, bytes)` CSV rows.
pub fn write_stage_csv<W: Write>(out: W, s: &Scenario) -> Result<()> {
    if s.system != SystemKind::Instinfer {
        return Err(Error::Config("stage breakdown needs an instinfer scenario".into()));
    }
    let work = head_work(s, s.workload.max_context(), 1)?[0];
    let b = stage_latencies(&s.engine, &work, s.geometry, s.flash_timing)?;
    let page = work.page_size as u64;
    let column_bytes = if work.mode == AttentionMode::Dense {
        0
    } else {
        work.column_pages() as u64 * page
    };
    let output_bytes = work.head_dim as u64 * crate::attention::STORAGE_ELEMENT_BYTES;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["stage", "us", "bytes"])?;
    for (name, us) in b.stages() {
        let bytes = match name {
            "k_column_load" => column_bytes,
            "kv_row_load" => work.row_pages() as u64 * page,
            "output_transfer" => output_bytes,
            _ => 0,
        };
        w.write_record([name.to_string(), format!("{us:.6}"), bytes.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
