//! Discrete-event timing of the flash backend.
//!
//! Every die and every channel is a resource with a sorted list of busy intervals.
//! A command's phases are placed into the earliest gap at or after the moment they
//! become ready, so no resource idles while work for it is waiting.
//! Times are in microseconds.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::layout::{FlashGeometry, PhysicalPageAddress};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlashTiming {
    pub t_read_page_us: f64,
    pub t_program_page_us: f64,
    pub t_erase_block_us: f64,
    /// Bytes per second on one channel.
    pub channel_bandwidth: f64,
    pub command_overhead_us: f64,
}

impl Default for FlashTiming {
    fn default() -> Self {
        Self {
            t_read_page_us: 50.0,
            t_program_page_us: 600.0,
            t_erase_block_us: 3000.0,
            channel_bandwidth: 1.4e9,
            command_overhead_us: 5.0,
        }
    }
}

impl FlashTiming {
    pub fn validate(&self) -> Result<()> {
        let vals = [
            self.t_read_page_us,
            self.t_program_page_us,
            self.t_erase_block_us,
            self.command_overhead_us,
        ];
        if vals.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::config("flash latencies must be finite and >= 0"));
        }
        if !(self.channel_bandwidth.is_finite() && self.channel_bandwidth > 0.0) {
            return Err(Error::config("channel bandwidth must be > 0"));
        }
        Ok(())
    }

    pub fn transfer_us(&self, page_size: usize) -> f64 {
        page_size as f64 / self.channel_bandwidth * 1e6
    }

    /// Latency of one read on an idle device.
    pub fn single_read_us(&self, page_size: usize) -> f64 {
        self.command_overhead_us + self.t_read_page_us + self.transfer_us(page_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CommandKind {
    Read,
    Program,
    Erase,
}

impl CommandKind {
    fn name(self) -> &'static str {
        match self {
            CommandKind::Read => "read",
            CommandKind::Program => "program",
            CommandKind::Erase => "erase",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimelineEvent {
    pub kind: CommandKind,
    pub address: PhysicalPageAddress,
    pub issue_us: f64,
    pub die_start_us: f64,
    pub die_end_us: f64,
    /// Equal to `transfer_end_us` for erases, which move no data.
    pub transfer_start_us: f64,
    pub transfer_end_us: f64,
    pub complete_us: f64,
    pub bytes: u64,
}

impl TimelineEvent {
    pub fn start_us(&self) -> f64 {
        self.die_start_us.min(self.transfer_start_us)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EventTimeline {
    pub events: Vec<TimelineEvent>,
}

impl EventTimeline {
    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn first_issue_us(&self) -> Option<f64> {
        self.events.iter().map(|e| e.issue_us).reduce(f64::min)
    }

    pub fn completion_us(&self) -> Option<f64> {
        self.events.iter().map(|e| e.complete_us).reduce(f64::max)
    }

    /// Time from the earliest issue to the last completion.
    pub fn makespan_us(&self) -> f64 {
        match (self.first_issue_us(), self.completion_us()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn total_bytes(&self) -> u64 {
        self.events.iter().map(|e| e.bytes).sum()
    }

    pub fn extend(&mut self, other: EventTimeline) {
        self.events.extend(other.events);
    }

    /// CSV with columns `command,channel,die,start,end` (µs).
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["command", "channel", "die", "start", "end"])?;
        for e in &self.events {
            w.write_record([
                e.kind.name().to_string(),
                e.address.channel.to_string(),
                e.address.die.to_string(),
                format!("{:.6}", e.start_us()),
                format!("{:.6}", e.complete_us),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Bytes per second over the timeline's makespan.
pub fn measure_bandwidth(timeline: &EventTimeline) -> Result<f64> {
    let span = timeline.makespan_us();
    if timeline.is_empty() || span <= 0.0 {
        return Err(Error::Invariant("bandwidth of an empty timeline".into()));
    }
    Ok(timeline.total_bytes() as f64 / (span * 1e-6))
}

/// Busy intervals of one resource, sorted and disjoint.
#[derive(Debug, Clone, Default)]
struct Resource {
    busy: Vec<(f64, f64)>,
}

impl Resource {
    /// Books `len` at the earliest free time `>= ready` and returns the start.
    fn reserve(&mut self, ready: f64, len: f64) -> f64 {
        let mut i = self.busy.partition_point(|iv| iv.1 <= ready);
        let mut t = ready;
        while i < self.busy.len() {
            if t + len <= self.busy[i].0 {
                break;
            }
            t = t.max(self.busy[i].1);
            i += 1;
        }
        if len > 0.0 {
            if i > 0 && self.busy[i - 1].1 == t {
                self.busy[i - 1].1 = t + len;
                if i < self.busy.len() && self.busy[i].0 == t + len {
                    let next = self.busy.remove(i);
                    self.busy[i - 1].1 = next.1;
                }
            } else if i < self.busy.len() && self.busy[i].0 == t + len {
                self.busy[i].0 = t;
            } else {
                self.busy.insert(i, (t, t + len));
            }
        }
        t
    }

    fn busy_time(&self) -> f64 {
        self.busy.iter().map(|(a, b)| b - a).sum()
    }
}

/// One device's flash backend. State persists across calls so later commands queue
/// behind earlier ones.
#[derive(Debug, Clone)]
pub struct FlashSim {
    geometry: FlashGeometry,
    timing: FlashTiming,
    channels: Vec<Resource>,
    dies: Vec<Resource>,
}

impl FlashSim {
    pub fn new(geometry: FlashGeometry, timing: FlashTiming) -> Result<Self> {
        geometry.validate()?;
        timing.validate()?;
        Ok(Self {
            channels: vec![Resource::default(); geometry.channels],
            dies: vec![Resource::default(); geometry.channels * geometry.dies_per_channel],
            geometry,
            timing,
        })
    }

    pub fn geometry(&self) -> &FlashGeometry {
        &self.geometry
    }

    pub fn timing(&self) -> &FlashTiming {
        &self.timing
    }

    pub fn reset(&mut self) {
        self.channels.iter_mut().for_each(|c| c.busy.clear());
        self.dies.iter_mut().for_each(|d| d.busy.clear());
    }

    /// Total booked time per channel.
    pub fn channel_busy_us(&self) -> Vec<f64> {
        self.channels.iter().map(Resource::busy_time).collect()
    }

    fn die_index(&self, a: &PhysicalPageAddress) -> Result<usize> {
        if !self.geometry.contains(a) {
            return Err(Error::Mapping(format!("address {a:?} outside geometry")));
        }
        Ok(a.channel * self.geometry.dies_per_channel + a.die)
    }

    fn page_transfer(&self) -> f64 {
        self.timing.transfer_us(self.geometry.page_size)
    }

    /// Array read on the die, then the page crosses the channel. The die is released
    /// once the data sits in its cache register.
    pub fn schedule_reads(&mut self, pages: &[PhysicalPageAddress], issue_us: f64) -> Result<EventTimeline> {
        let xfer = self.page_transfer();
        let mut events = Vec::with_capacity(pages.len());
        for a in pages {
            let die = self.die_index(a)?;
            let ready = issue_us + self.timing.command_overhead_us;
            let die_start = self.dies[die].reserve(ready, self.timing.t_read_page_us);
            let die_end = die_start + self.timing.t_read_page_us;
            let transfer_start = self.channels[a.channel].reserve(die_end, xfer);
            events.push(TimelineEvent {
                kind: CommandKind::Read,
                address: *a,
                issue_us,
                die_start_us: die_start,
                die_end_us: die_end,
                transfer_start_us: transfer_start,
                transfer_end_us: transfer_start + xfer,
                complete_us: transfer_start + xfer,
                bytes: self.geometry.page_size as u64,
            });
        }
        Ok(EventTimeline { events })
    }

    /// Data crosses the channel first, then the die programs it.
    pub fn schedule_programs(&mut self, pages: &[PhysicalPageAddress], issue_us: f64) -> Result<EventTimeline> {
        let xfer = self.page_transfer();
        let mut events = Vec::with_capacity(pages.len());
        for a in pages {
            let die = self.die_index(a)?;
            let ready = issue_us + self.timing.command_overhead_us;
            let transfer_start = self.channels[a.channel].reserve(ready, xfer);
            let transfer_end = transfer_start + xfer;
            let die_start = self.dies[die].reserve(transfer_end, self.timing.t_program_page_us);
            let die_end = die_start + self.timing.t_program_page_us;
            events.push(TimelineEvent {
                kind: CommandKind::Program,
                address: *a,
                issue_us,
                die_start_us: die_start,
                die_end_us: die_end,
                transfer_start_us: transfer_start,
                transfer_end_us: transfer_end,
                complete_us: die_end,
                bytes: self.geometry.page_size as u64,
            });
        }
        Ok(EventTimeline { events })
    }

    /// Erases the block containing each address.
    pub fn schedule_erases(&mut self, blocks: &[PhysicalPageAddress], issue_us: f64) -> Result<EventTimeline> {
        let mut events = Vec::with_capacity(blocks.len());
        for a in blocks {
            let die = self.die_index(a)?;
            let ready = issue_us + self.timing.command_overhead_us;
            let die_start = self.dies[die].reserve(ready, self.timing.t_erase_block_us);
            let die_end = die_start + self.timing.t_erase_block_us;
            events.push(TimelineEvent {
                kind: CommandKind::Erase,
                address: *a,
                issue_us,
                die_start_us: die_start,
                die_end_us: die_end,
                transfer_start_us: die_start,
                transfer_end_us: die_start,
                complete_us: die_end,
                bytes: 0,
            });
        }
        Ok(EventTimeline { events })
    }
}

/// `pages` addresses spread round-robin over every channel and die, the access pattern
/// of a long sequential stream.
pub fn striped_pages(geometry: &FlashGeometry, pages: usize) -> Vec<PhysicalPageAddress> {
    (0..pages)
        .map(|i| {
            let channel = i % geometry.channels;
            let slot = (i / geometry.channels) as u64;
            geometry
                .slot_address(channel, slot % geometry.pages_per_channel())
                .expect("slot within channel")
        })
        .collect()
}
