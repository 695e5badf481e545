//! Output error of sparse attention on synthetic Gaussian heads.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attention::{dense_attention, sparf_attention, sparq_attention, HeadConfig, HeadTensors};
use crate::error::{Error, Result};

pub const ALLOWED_RATIOS: [f64; 5] = [1.0, 0.5, 0.25, 0.125, 0.0625];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracySpec {
    pub seed: u64,
    pub head_dim: usize,
    pub seq_len: usize,
    pub heads: usize,
    pub ratios: Vec<f64>,
    pub embedding_group: usize,
    pub token_group: usize,
}

impl AccuracySpec {
    pub fn new(seed: u64, head_dim: usize, seq_len: usize, heads: usize, ratios: Vec<f64>) -> Self {
        Self {
            seed,
            head_dim,
            seq_len,
            heads,
            ratios,
            embedding_group: 8,
            token_group: 16,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || self.seq_len == 0 || self.heads == 0 {
            return Err(Error::config("head_dim, seq_len and heads must be >= 1"));
        }
        if self.ratios.is_empty() {
            return Err(Error::config("no ratios given"));
        }
        for &r in &self.ratios {
            if !ALLOWED_RATIOS.iter().any(|a| (a - r).abs() < 1e-12) {
                return Err(Error::config(format!("ratio {r} not in {{1, 1/2, 1/4, 1/8, 1/16}}")));
            }
        }
        Ok(())
    }

    fn head_config(&self, ratio: f64) -> HeadConfig {
        let kept = |n: usize| ((ratio * n as f64).round() as usize).clamp(1, n);
        HeadConfig {
            head_dim: self.head_dim,
            seq_len: self.seq_len,
            kept_embeddings: kept(self.head_dim),
            kept_tokens: kept(self.seq_len),
            embedding_group: self.embedding_group.min(self.head_dim),
            token_group: self.token_group.min(self.seq_len),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub ratio: f64,
    pub kept_embeddings: usize,
    pub kept_tokens: usize,
    /// Mean over heads of |sparf - dense| / |dense|.
    pub mean_rel_error: f64,
    /// Largest |sparf - sparq|_inf over heads.
    pub max_sparq_delta: f64,
}

fn l2(v: impl Iterator<Item = f64>) -> f64 {
    v.map(|x| x * x).sum::<f64>().sqrt()
}

/// One row per ratio, in the order given. Every ratio sees the same heads.
pub fn accuracy(spec: &AccuracySpec) -> Result<Vec<AccuracyRow>> {
    spec.validate()?;
    let heads: Vec<HeadTensors> = (0..spec.heads)
        .into_par_iter()
        .map(|h| HeadTensors::random(spec.seed.wrapping_add(h as u64), spec.head_dim, spec.seq_len))
        .collect();
    let dense: Vec<Vec<f64>> = heads.par_iter().map(dense_attention).collect::<Result<_>>()?;
    spec.ratios
        .iter()
        .map(|&ratio| {
            let cfg = spec.head_config(ratio);
            let per_head: Vec<(f64, f64)> = heads
                .par_iter()
                .zip(&dense)
                .map(|(t, d)| {
                    let f = sparf_attention(t, &cfg)?;
                    let q = sparq_attention(t, cfg.kept_embeddings, cfg.kept_tokens)?;
                    let err = l2(f.out.iter().zip(d).map(|(a, b)| a - b)) / l2(d.iter().copied()).max(f64::MIN_POSITIVE);
                    let delta = f.out.iter().zip(&q.out).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    Ok((err, delta))
                })
                .collect::<Result<_>>()?;
            Ok(AccuracyRow {
                ratio,
                kept_embeddings: cfg.kept_embeddings,
                kept_tokens: cfg.kept_tokens,
                mean_rel_error: per_head.iter().map(|p| p.0).sum::<f64>() / per_head.len() as f64,
                max_sparq_delta: per_head.iter().map(|p| p.1).fold(0.0, f64::max),
            })
        })
        .collect()
}

pub fn write_csv<W: Write>(mut out: W, spec: &AccuracySpec, rows: &[AccuracyRow]) -> Result<()> {
    writeln!(out, "# sparfsim-accuracy v1")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "ratio",
        "kept_embeddings",
        "kept_tokens",
        "mean_rel_l2_error",
        "max_sparq_delta",
        "heads",
        "head_dim",
        "seq_len",
        "seed",
    ])?;
    for r in rows {
        w.write_record([
            format!("{:.9e}", r.ratio),
            r.kept_embeddings.to_string(),
            r.kept_tokens.to_string(),
            format!("{:.9e}", r.mean_rel_error),
            format!("{:.9e}", r.max_sparq_delta),
            spec.heads.to_string(),
            spec.head_dim.to_string(),
            spec.seq_len.to_string(),
            spec.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
