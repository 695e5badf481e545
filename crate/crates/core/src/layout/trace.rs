//! JSON-lines trace replay against a [`KvLayout`].
//!
//! One command per line, tagged by `op`:
//! `append`, `append_seeded`, `lookup_tokens`, `lookup_embeddings`, `sync`, `finish`, `stats`.

use std::io::BufRead;

use serde::{Deserialize, Serialize};

use super::{KvLayout, KvTensor, PageLookup, WriteStats};
use crate::attention::{Axis, SelectionMask};
use crate::error::{Error, Result};
use crate::tensor::NormalSource;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TraceCommand {
    Append {
        layer: usize,
        head: usize,
        k: Vec<f64>,
        v: Vec<f64>,
    },
    /// `tokens` rows of seeded Gaussian K and V.
    AppendSeeded {
        layer: usize,
        head: usize,
        tokens: usize,
        seed: u64,
    },
    LookupTokens {
        layer: usize,
        head: usize,
        tensor: KvTensor,
        tokens: Vec<usize>,
    },
    LookupEmbeddings {
        layer: usize,
        head: usize,
        embeddings: Vec<usize>,
        start: usize,
        end: usize,
    },
    Sync,
    Finish,
    Stats,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum TraceEvent {
    Append { flush_intents: usize, pages_programmed: u64 },
    Lookup(PageLookup),
    Sync { pages_programmed: u64 },
    Finish { pages_programmed: u64 },
    Stats { stats: WriteStats, write_amplification: f64 },
}

pub fn apply(layout: &mut KvLayout, cmd: &TraceCommand) -> Result<TraceEvent> {
    Ok(match cmd {
        TraceCommand::Append { layer, head, k, v } => {
            let intents = layout.append_token_kv(*layer, *head, k, v)?;
            TraceEvent::Append {
                flush_intents: intents.len(),
                pages_programmed: layout.stats().pages_programmed,
            }
        }
        TraceCommand::AppendSeeded {
            layer,
            head,
            tokens,
            seed,
        } => {
            let d = layout.config().head_dim;
            let mut src = NormalSource::new(*seed);
            let mut n = 0;
            for _ in 0..*tokens {
                let k = src.vector(d);
                let v = src.vector(d);
                n += layout.append_token_kv(*layer, *head, &k, &v)?.len();
            }
            TraceEvent::Append {
                flush_intents: n,
                pages_programmed: layout.stats().pages_programmed,
            }
        }
        TraceCommand::LookupTokens {
            layer,
            head,
            tensor,
            tokens,
        } => {
            let mut sel = tokens.clone();
            sel.sort_unstable();
            sel.dedup();
            let extent = sel.last().map_or(0, |t| t + 1);
            let mask = SelectionMask::new(Axis::Token, sel, extent)?;
            TraceEvent::Lookup(layout.lookup_token_pages(*layer, *head, &mask, *tensor)?)
        }
        TraceCommand::LookupEmbeddings {
            layer,
            head,
            embeddings,
            start,
            end,
        } => {
            let mut sel = embeddings.clone();
            sel.sort_unstable();
            sel.dedup();
            let mask = SelectionMask::new(Axis::Embedding, sel, layout.config().head_dim)?;
            TraceEvent::Lookup(layout.lookup_embedding_pages(*layer, *head, &mask, *start..*end)?)
        }
        TraceCommand::Sync => {
            layout.sync()?;
            TraceEvent::Sync {
                pages_programmed: layout.stats().pages_programmed,
            }
        }
        TraceCommand::Finish => {
            layout.finish()?;
            TraceEvent::Finish {
                pages_programmed: layout.stats().pages_programmed,
            }
        }
        TraceCommand::Stats => {
            let stats = layout.stats();
            TraceEvent::Stats {
                stats,
                write_amplification: stats.write_amplification(),
            }
        }
    })
}

/// Replays every non-blank line. Errors name the offending line.
pub fn replay<R: BufRead>(layout: &mut KvLayout, input: R) -> Result<Vec<TraceEvent>> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cmd: TraceCommand =
            serde_json::from_str(&line).map_err(|e| Error::Parse(format!("trace line {}: {e}", i + 1)))?;
        events.push(apply(layout, &cmd)?);
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layout::{FlashGeometry, LayoutConfig};

    #[test]
    fn replay_small_trace() {
        let cfg = LayoutConfig::new(FlashGeometry::default(), 1, 2, 128, 4096);
        let mut layout = KvLayout::new(cfg).unwrap();
        let trace = r#"
{"op":"append_seeded","layer":0,"head":1,"tokens":20,"seed":3}
{"op":"sync"}
{"op":"lookup_tokens","layer":0,"head":1,"tensor":"k","tokens":[19,2]}
{"op":"finish"}
{"op":"stats"}
"#;
        let events = replay(&mut layout, trace.as_bytes()).unwrap();
        assert_eq!(events.len(), 5);
        match &events[2] {
            TraceEvent::Lookup(l) => {
                assert_eq!(l.pages.len(), 1);
                assert_eq!(l.dram_hits, 1);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn bad_line_is_reported() {
        let cfg = LayoutConfig::new(FlashGeometry::default(), 1, 1, 128, 4096);
        let mut layout = KvLayout::new(cfg).unwrap();
        let err = replay(&mut layout, "{\"op\":\"sync\"}\n{\"op\":\"warp\"}\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
