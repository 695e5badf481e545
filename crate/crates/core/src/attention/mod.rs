//! Single-head dense, SparQ and flash-aware SparF attention.
//!
//! All arithmetic is `f64`. Storage sizes in [`AccessTrace`] assume 2-byte (FP16)
//! elements, which is how the KV cache sits on flash.

mod select;
pub mod vectors;

pub use select::{
    argtopk, filter_groups, group_count, group_expand, load_groups, Axis, LoadedGroups, SelectionMask, TopKKey,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Matrix, NormalSource};

/// Bytes per stored KV element.
pub const STORAGE_ELEMENT_BYTES: u64 = 2;

/// Per-call sizes: head dimension, sequence length, kept counts and group sizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub head_dim: usize,
    pub seq_len: usize,
    /// Embeddings kept from the query (r).
    pub kept_embeddings: usize,
    /// Tokens kept after approximate scoring (k).
    pub kept_tokens: usize,
    /// Embeddings per embedding-indexed page (m).
    pub embedding_group: usize,
    /// Tokens per token-indexed page (n).
    pub token_group: usize,
}

impl HeadConfig {
    /// No pruning, single-element groups.
    pub fn full(head_dim: usize, seq_len: usize) -> Self {
        Self {
            head_dim,
            seq_len,
            kept_embeddings: head_dim,
            kept_tokens: seq_len,
            embedding_group: 1,
            token_group: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.head_dim == 0 || self.seq_len == 0 {
            return Err(Error::config("head_dim and seq_len must be positive"));
        }
        if self.kept_embeddings == 0 || self.kept_embeddings > self.head_dim {
            return Err(Error::config(format!(
                "kept_embeddings {} outside [1, {}]",
                self.kept_embeddings, self.head_dim
            )));
        }
        if self.kept_tokens == 0 || self.kept_tokens > self.seq_len {
            return Err(Error::config(format!(
                "kept_tokens {} outside [1, {}]",
                self.kept_tokens, self.seq_len
            )));
        }
        if self.embedding_group == 0 || self.token_group == 0 {
            return Err(Error::config("group sizes must be >= 1"));
        }
        Ok(())
    }

    /// Bytes held by one page: one token group of a K or V row block.
    pub fn page_bytes(&self) -> u64 {
        self.token_group as u64 * self.head_dim as u64 * STORAGE_ELEMENT_BYTES
    }

    /// Tokens held by one embedding-indexed page.
    pub fn stripe_tokens(&self) -> usize {
        ((self.token_group * self.head_dim) / self.embedding_group).max(1)
    }
}

/// Operands of one head: query, K/V caches and the running mean of V.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTensors {
    pub query: Vec<f64>,
    pub keys: Matrix,
    pub values: Matrix,
    pub value_mean: Vec<f64>,
    pub token_count: usize,
}

impl HeadTensors {
    /// Builds the operands, folding every value row into the running mean.
    pub fn new(query: Vec<f64>, keys: Matrix, values: Matrix) -> Result<Self> {
        let mut mean = vec![0.0; values.cols()];
        let mut count = 0;
        for t in 0..values.rows() {
            let (m, c) = update_value_mean(&mean, count, values.row(t))?;
            mean = m;
            count = c;
        }
        let t = Self {
            query,
            keys,
            values,
            value_mean: mean,
            token_count: count,
        };
        t.check_dims()?;
        Ok(t)
    }

    /// Standard-normal q, K and V.
    pub fn random(seed: u64, head_dim: usize, seq_len: usize) -> Self {
        let mut src = NormalSource::new(seed);
        let q = src.vector(head_dim);
        let k = src.matrix(seq_len, head_dim);
        let v = src.matrix(seq_len, head_dim);
        Self::new(q, k, v).expect("generated tensors are consistent")
    }

    pub fn head_dim(&self) -> usize {
        self.query.len()
    }

    pub fn seq_len(&self) -> usize {
        self.keys.rows()
    }

    pub fn check_dims(&self) -> Result<()> {
        let d = self.query.len();
        let dims = [
            ("key columns", self.keys.cols()),
            ("value columns", self.values.cols()),
            ("value mean", self.value_mean.len()),
        ];
        for (what, actual) in dims {
            if actual != d {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: d,
                    actual,
                });
            }
        }
        if self.values.rows() != self.keys.rows() {
            return Err(Error::DimensionMismatch {
                what: "value rows",
                expected: self.keys.rows(),
                actual: self.values.rows(),
            });
        }
        if d == 0 || self.keys.rows() == 0 {
            return Err(Error::config("empty head tensors"));
        }
        Ok(())
    }

    fn check_config(&self, cfg: &HeadConfig) -> Result<()> {
        self.check_dims()?;
        cfg.validate()?;
        if cfg.head_dim != self.head_dim() {
            return Err(Error::DimensionMismatch {
                what: "config head_dim",
                expected: self.head_dim(),
                actual: cfg.head_dim,
            });
        }
        if cfg.seq_len != self.seq_len() {
            return Err(Error::DimensionMismatch {
                what: "config seq_len",
                expected: self.seq_len(),
                actual: cfg.seq_len,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LoadPhase {
    /// Embedding-indexed K column pages.
    EmbeddingColumns,
    /// Token-indexed K and V row pages.
    TokenRows,
}

/// Flash traffic one load phase induces.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessTrace {
    pub phase: LoadPhase,
    pub page_bytes: u64,
    pub pages_requested: u64,
    pub bytes_over_channel: u64,
    pub bytes_after_filter: u64,
    pub dense_bytes: u64,
}

impl AccessTrace {
    fn new(phase: LoadPhase, page_bytes: u64, pages: u64, after_filter: u64, dense_pages: u64) -> Self {
        Self {
            phase,
            page_bytes,
            pages_requested: pages,
            bytes_over_channel: pages * page_bytes,
            bytes_after_filter: after_filter,
            dense_bytes: dense_pages * page_bytes,
        }
    }

    /// Embedding-column phase for `groups_loaded` embedding groups over `cfg.seq_len` tokens.
    pub fn embedding_columns(cfg: &HeadConfig, groups_loaded: usize) -> Self {
        let stripes = group_count(cfg.seq_len, cfg.stripe_tokens()) as u64;
        let total_groups = group_count(cfg.head_dim, cfg.embedding_group) as u64;
        Self::new(
            LoadPhase::EmbeddingColumns,
            cfg.page_bytes(),
            groups_loaded as u64 * stripes,
            (cfg.kept_embeddings * cfg.seq_len) as u64 * STORAGE_ELEMENT_BYTES,
            total_groups * stripes,
        )
    }

    /// Token-row phase: one K page and one V page per loaded token group.
    pub fn token_rows(cfg: &HeadConfig, groups_loaded: usize) -> Self {
        let total_groups = group_count(cfg.seq_len, cfg.token_group) as u64;
        Self::new(
            LoadPhase::TokenRows,
            cfg.page_bytes(),
            2 * groups_loaded as u64,
            2 * (cfg.kept_tokens * cfg.head_dim) as u64 * STORAGE_ELEMENT_BYTES,
            2 * total_groups,
        )
    }
}

/// Output of a sparse attention call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionResult {
    pub out: Vec<f64>,
    pub alpha: f64,
    pub approx_scores: Vec<f64>,
    pub embeddings: SelectionMask,
    pub tokens: SelectionMask,
    /// Embedding-column phase, then token-row phase.
    pub traces: [AccessTrace; 2],
    /// Set when |q|_1 was zero and the first r embeddings were used instead.
    pub degenerate_query: bool,
}

/// Knobs that are not part of the algorithm proper.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparfOptions {
    /// Additive per-token bias applied before token selection (padding mask for ragged batches).
    pub token_bias: Option<Vec<f64>>,
    /// Multiplier on the approximate-score temperature. `None` means 1; only `verify` mutates it.
    pub temperature_scale: Option<f64>,
}

pub(crate) fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        acc += x * y;
    }
    acc
}

/// softmax(q·Kᵀ/√d_h)·V.
pub fn dense_attention(t: &HeadTensors) -> Result<Vec<f64>> {
    t.check_dims()?;
    let scale = (t.head_dim() as f64).sqrt();
    let logits: Vec<f64> = (0..t.seq_len()).map(|i| dot(&t.query, t.keys.row(i)) / scale).collect();
    Ok(weighted_rows(&softmax(&logits), &t.values))
}

fn weighted_rows(weights: &[f64], rows: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; rows.cols()];
    for (j, &w) in weights.iter().enumerate() {
        for (o, &v) in out.iter_mut().zip(rows.row(j)) {
            *o += w * v;
        }
    }
    out
}

fn l1(values: impl IntoIterator<Item = f64>) -> f64 {
    values.into_iter().map(f64::abs).sum()
}

/// Temperature √(d_h · ‖q_[i]‖₁ / ‖q‖₁), or an error when ‖q‖₁ = 0.
fn approx_temperature(q: &[f64], sel: &SelectionMask) -> Result<f64> {
    let total = l1(q.iter().copied());
    if total == 0.0 {
        return Err(Error::DegenerateQuery);
    }
    let kept = l1(sel.selected.iter().map(|&e| q[e]));
    Ok((q.len() as f64 * kept / total).sqrt())
}

/// Approximate scores from the selected query embeddings.
///
/// `column(idx, t)` yields K[t, sel[idx]]; the reduction runs over `idx` in increasing order.
fn approx_scores_from(
    q: &[f64],
    sel: &SelectionMask,
    seq_len: usize,
    temperature: f64,
    column: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let logits: Vec<f64> = (0..seq_len)
        .map(|t| {
            let mut acc = 0.0;
            for (idx, &e) in sel.selected.iter().enumerate() {
                acc += q[e] * column(idx, t);
            }
            acc / temperature
        })
        .collect();
    softmax(&logits)
}

/// ŝ: softmax of the selected query components against the matching K columns.
pub fn approx_scores(t: &HeadTensors, sel: &SelectionMask) -> Result<Vec<f64>> {
    t.check_dims()?;
    if sel.axis != Axis::Embedding || sel.extent != t.head_dim() {
        return Err(Error::config("approx_scores needs an embedding-axis mask over d_h"));
    }
    let temperature = approx_temperature(&t.query, sel)?;
    Ok(approx_scores_from(&t.query, sel, t.seq_len(), temperature, |idx, tok| {
        t.keys.get(tok, sel.selected[idx])
    }))
}

/// α: approximate-score mass captured by the kept tokens.
pub fn alpha_mass(scores: &[f64], tokens: &SelectionMask) -> f64 {
    let mut acc = 0.0;
    for &j in &tokens.selected {
        acc += scores[j];
    }
    acc.clamp(0.0, 1.0)
}

/// Folds one value row into the running mean.
pub fn update_value_mean(mean: &[f64], count: usize, row: &[f64]) -> Result<(Vec<f64>, usize)> {
    if mean.len() != row.len() {
        return Err(Error::DimensionMismatch {
            what: "value row",
            expected: mean.len(),
            actual: row.len(),
        });
    }
    let n = count as f64;
    let updated = mean.iter().zip(row).map(|(&m, &v)| (m * n + v) / (n + 1.0)).collect();
    Ok((updated, count + 1))
}

struct Selection {
    embeddings: SelectionMask,
    degenerate: bool,
}

fn select_embeddings(q: &[f64], r: usize) -> Result<Selection> {
    if l1(q.iter().copied()) == 0.0 {
        return Ok(Selection {
            embeddings: SelectionMask::new(Axis::Embedding, (0..r).collect(), q.len())?,
            degenerate: true,
        });
    }
    Ok(Selection {
        embeddings: argtopk(q, r, TopKKey::Magnitude, Axis::Embedding)?,
        degenerate: false,
    })
}

fn select_tokens(scores: &[f64], k: usize, bias: Option<&[f64]>) -> Result<SelectionMask> {
    match bias {
        None => argtopk(scores, k, TopKKey::Raw, Axis::Token),
        Some(b) => {
            if b.len() != scores.len() {
                return Err(Error::DimensionMismatch {
                    what: "token bias",
                    expected: scores.len(),
                    actual: b.len(),
                });
            }
            let biased: Vec<f64> = scores.iter().zip(b).map(|(s, m)| s + m).collect();
            argtopk(&biased, k, TopKKey::Raw, Axis::Token)
        }
    }
}

/// Final step shared by SparQ and SparF: exact attention over kept rows, blended with v̄.
fn blend_output(q: &[f64], keys: &Matrix, values: &Matrix, alpha: f64, value_mean: &[f64]) -> Vec<f64> {
    let scale = (q.len() as f64).sqrt();
    let logits: Vec<f64> = (0..keys.rows()).map(|j| dot(q, keys.row(j)) / scale).collect();
    let attended = weighted_rows(&softmax(&logits), values);
    attended
        .iter()
        .zip(value_mean)
        .map(|(&a, &m)| alpha * a + (1.0 - alpha) * m)
        .collect()
}

/// SparF: flash-aware sparse attention with page-granular loads and exact filtering.
pub fn sparf_attention(t: &HeadTensors, cfg: &HeadConfig) -> Result<AttentionResult> {
    sparf_attention_with(t, cfg, &SparfOptions::default())
}

pub fn sparf_attention_with(t: &HeadTensors, cfg: &HeadConfig, opts: &SparfOptions) -> Result<AttentionResult> {
    t.check_config(cfg)?;
    let seq_len = t.seq_len();

    // Embedding top-r, then page-granular K column load and filter.
    let Selection {
        embeddings,
        degenerate,
    } = select_embeddings(&t.query, cfg.kept_embeddings)?;
    let column_groups = group_expand(&embeddings, cfg.embedding_group)?;
    let keys_t = t.keys.transpose();
    let loaded_columns = load_groups(&keys_t, &column_groups, cfg.embedding_group)?;
    let columns = filter_groups(&loaded_columns, &embeddings)?;

    let scores = if degenerate {
        vec![1.0 / seq_len as f64; seq_len]
    } else {
        let temperature = approx_temperature(&t.query, &embeddings)? * opts.temperature_scale.unwrap_or(1.0);
        approx_scores_from(&t.query, &embeddings, seq_len, temperature, |idx, tok| columns.get(idx, tok))
    };

    let tokens = select_tokens(&scores, cfg.kept_tokens, opts.token_bias.as_deref())?;
    let alpha = alpha_mass(&scores, &tokens);

    // Token-group K/V row load and filter.
    let row_groups = group_expand(&tokens, cfg.token_group)?;
    let keys = filter_groups(&load_groups(&t.keys, &row_groups, cfg.token_group)?, &tokens)?;
    let values = filter_groups(&load_groups(&t.values, &row_groups, cfg.token_group)?, &tokens)?;

    let out = blend_output(&t.query, &keys, &values, alpha, &t.value_mean);
    Ok(AttentionResult {
        out,
        alpha,
        approx_scores: scores,
        traces: [
            AccessTrace::embedding_columns(cfg, column_groups.len()),
            AccessTrace::token_rows(cfg, row_groups.len()),
        ],
        embeddings,
        tokens,
        degenerate_query: degenerate,
    })
}

/// SparQ reference: same selection semantics, direct gathers, no page accounting.
///
/// The traces it reports are element-granular (single-row pages).
pub fn sparq_attention(t: &HeadTensors, kept_embeddings: usize, kept_tokens: usize) -> Result<AttentionResult> {
    let cfg = HeadConfig {
        kept_embeddings,
        kept_tokens,
        ..HeadConfig::full(t.head_dim(), t.seq_len())
    };
    t.check_config(&cfg)?;
    let seq_len = t.seq_len();
    let Selection {
        embeddings,
        degenerate,
    } = select_embeddings(&t.query, kept_embeddings)?;
    let scores = if degenerate {
        vec![1.0 / seq_len as f64; seq_len]
    } else {
        approx_scores(t, &embeddings)?
    };
    let tokens = select_tokens(&scores, kept_tokens, None)?;
    let alpha = alpha_mass(&scores, &tokens);
    let keys = t.keys.gather_rows(&tokens.selected);
    let values = t.values.gather_rows(&tokens.selected);
    let out = blend_output(&t.query, &keys, &values, alpha, &t.value_mean);
    Ok(AttentionResult {
        out,
        alpha,
        approx_scores: scores,
        traces: [
            AccessTrace::embedding_columns(&cfg, embeddings.len()),
            AccessTrace::token_rows(&cfg, tokens.len()),
        ],
        embeddings,
        tokens,
        degenerate_query: degenerate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn identity_head() -> HeadTensors {
        let k = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        HeadTensors::new(vec![1.0, 0.0], k.clone(), k).unwrap()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn dense_two_token_example() {
        let out = dense_attention(&identity_head()).unwrap();
        // softmax([1/sqrt(2), 0])
        let e = (1.0f64 / 2f64.sqrt()).exp();
        assert!(close(out[0], e / (e + 1.0), 1e-12));
        assert!(close(out[0], 0.6698, 1e-4));
        assert!(close(out[1], 0.3302, 1e-4));
    }

    #[test]
    fn dense_zero_values_and_single_token() {
        let mut t = HeadTensors::random(1, 4, 6);
        t.values = Matrix::zeros(6, 4);
        assert!(dense_attention(&t).unwrap().iter().all(|&x| x == 0.0));

        let t = HeadTensors::random(2, 4, 1);
        let out = dense_attention(&t).unwrap();
        assert_eq!(out, t.values.row(0));
    }

    #[test]
    fn dense_rejects_bad_dims() {
        let mut t = HeadTensors::random(3, 4, 5);
        t.query.push(1.0);
        assert!(matches!(dense_attention(&t), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn approx_scores_examples() {
        let t = identity_head();
        let sel = SelectionMask::new(Axis::Embedding, vec![0], 2).unwrap();
        let s = approx_scores(&t, &sel).unwrap();
        assert!(close(s[0], 0.6698, 1e-4));
        assert!(close(s[0] + s[1], 1.0, 1e-12));

        // Zeroed K columns give equal logits.
        let mut t = HeadTensors::random(4, 4, 8);
        t.keys = Matrix::zeros(8, 4);
        let sel = SelectionMask::new(Axis::Embedding, vec![1, 3], 4).unwrap();
        for p in approx_scores(&t, &sel).unwrap() {
            assert!(close(p, 0.125, 1e-12));
        }
    }

    #[test]
    fn approx_scores_full_selection_is_dense_softmax() {
        let t = HeadTensors::random(5, 8, 10);
        let s = approx_scores(&t, &SelectionMask::full(Axis::Embedding, 8)).unwrap();
        let scale = 8f64.sqrt();
        let logits: Vec<f64> = (0..10).map(|i| dot(&t.query, t.keys.row(i)) / scale).collect();
        for (a, b) in s.iter().zip(softmax(&logits)) {
            assert!(close(*a, b, 1e-12));
        }
    }

    #[test]
    fn approx_scores_degenerate_query() {
        let mut t = HeadTensors::random(6, 4, 4);
        t.query = vec![0.0; 4];
        let sel = SelectionMask::new(Axis::Embedding, vec![0], 4).unwrap();
        assert!(matches!(approx_scores(&t, &sel), Err(Error::DegenerateQuery)));
    }

    #[test]
    fn alpha_examples() {
        let tok = |s: Vec<usize>, n| SelectionMask::new(Axis::Token, s, n).unwrap();
        assert!(close(alpha_mass(&[0.6698, 0.3302], &tok(vec![0], 2)), 0.6698, 1e-12));
        let s = softmax(&[0.3, -1.0, 2.0]);
        assert!(close(alpha_mass(&s, &SelectionMask::full(Axis::Token, 3)), 1.0, 1e-6));
        assert!(close(alpha_mass(&[0.125; 8], &tok(vec![2, 5], 8)), 0.25, 1e-12));
    }

    #[test]
    fn value_mean_examples() {
        let (m, c) = update_value_mean(&[0.0, 0.0], 0, &[2.0, 4.0]).unwrap();
        assert_eq!((m.clone(), c), (vec![2.0, 4.0], 1));
        let (m, c) = update_value_mean(&m, c, &[0.0, 0.0]).unwrap();
        assert_eq!((m, c), (vec![1.0, 2.0], 2));
        assert!(update_value_mean(&[0.0], 0, &[1.0, 2.0]).is_err());
    }

    #[test]
    fn value_mean_matches_batch_mean() {
        let t = HeadTensors::random(7, 6, 50);
        for d in 0..6 {
            let batch: f64 = (0..50).map(|i| t.values.get(i, d)).sum::<f64>() / 50.0;
            assert!(close(t.value_mean[d], batch, 1e-9));
        }
        assert_eq!(t.token_count, 50);
    }

    #[test]
    fn sparf_full_selection_matches_dense() {
        let t = HeadTensors::random(8, 16, 40);
        let cfg = HeadConfig {
            embedding_group: 4,
            token_group: 8,
            ..HeadConfig::full(16, 40)
        };
        let r = sparf_attention(&t, &cfg).unwrap();
        assert!(close(r.alpha, 1.0, 1e-9));
        let dense = dense_attention(&t).unwrap();
        for (a, b) in r.out.iter().zip(&dense) {
            assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12) + 1e-12);
        }
        assert_eq!(r.traces[1].bytes_over_channel, r.traces[1].dense_bytes);
    }

    #[test]
    fn sparq_single_token_blend() {
        let t = HeadTensors::random(9, 8, 12);
        let r = sparq_attention(&t, 3, 1).unwrap();
        let j = r.tokens.selected[0];
        for d in 0..8 {
            let expect = r.alpha * t.values.get(j, d) + (1.0 - r.alpha) * t.value_mean[d];
            assert!(close(r.out[d], expect, 1e-12));
        }
    }

    #[test]
    fn sparf_degenerate_query_falls_back() {
        let mut t = HeadTensors::random(10, 8, 16);
        t.query = vec![0.0; 8];
        let cfg = HeadConfig {
            kept_embeddings: 3,
            kept_tokens: 4,
            embedding_group: 2,
            token_group: 4,
            ..HeadConfig::full(8, 16)
        };
        let r = sparf_attention(&t, &cfg).unwrap();
        assert!(r.degenerate_query);
        assert_eq!(r.embeddings.selected, vec![0, 1, 2]);
        assert!(close(r.alpha, 0.25, 1e-12));
    }

    #[test]
    fn sparf_rejects_bad_config() {
        let t = HeadTensors::random(11, 8, 16);
        let mut cfg = HeadConfig::full(8, 16);
        cfg.kept_tokens = 17;
        assert!(matches!(sparf_attention(&t, &cfg), Err(Error::Config(_))));
        let cfg = HeadConfig::full(8, 15);
        assert!(matches!(sparf_attention(&t, &cfg), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn token_bias_steers_selection() {
        let t = HeadTensors::random(12, 8, 16);
        let cfg = HeadConfig {
            kept_embeddings: 8,
            kept_tokens: 2,
            ..HeadConfig::full(8, 16)
        };
        let mut bias = vec![0.0; 16];
        bias[14] = 10.0;
        bias[15] = 10.0;
        let opts = SparfOptions {
            token_bias: Some(bias),
            ..Default::default()
        };
        let r = sparf_attention_with(&t, &cfg, &opts).unwrap();
        assert_eq!(r.tokens.selected, vec![14, 15]);
    }

    #[test]
    fn trace_example_counts() {
        let t = HeadTensors::random(13, 128, 256);
        let cfg = HeadConfig {
            head_dim: 128,
            seq_len: 256,
            kept_embeddings: 16,
            kept_tokens: 32,
            embedding_group: 8,
            token_group: 16,
        };
        let r = sparf_attention(&t, &cfg).unwrap();
        let [cols, rows] = r.traces;
        assert_eq!(cols.page_bytes, 4096);
        assert_eq!(cfg.stripe_tokens(), 256);
        assert_eq!(cols.dense_bytes, 16 * 4096);
        assert_eq!(rows.dense_bytes, 2 * 16 * 4096);
        assert_eq!(rows.bytes_after_filter, 2 * 32 * 128 * 2);
        for tr in r.traces {
            assert!(tr.bytes_after_filter <= tr.bytes_over_channel);
            assert!(tr.bytes_over_channel <= tr.dense_bytes);
        }
    }
}
