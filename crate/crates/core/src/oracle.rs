//! Independent reference transcriptions.
//!
//! Nothing here calls into [`crate::attention`]; the routines are straight-line loops over
//! plain slices so they can check the engine path (and catch mutations of it in `verify`).

use crate::tensor::Matrix;

/// Kept indices of the `count` largest keys, lowest index first among equals.
///
/// Threshold method: find the count-th largest key, take everything strictly above it,
/// then fill with equal keys in index order.
fn top_indices(keys: &[f64], count: usize) -> Vec<bool> {
    let mut sorted = keys.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[count - 1];
    let mut keep = vec![false; keys.len()];
    let mut taken = 0;
    for (i, &x) in keys.iter().enumerate() {
        if x.total_cmp(&threshold).is_gt() {
            keep[i] = true;
            taken += 1;
        }
    }
    for (i, &x) in keys.iter().enumerate() {
        if taken == count {
            break;
        }
        if x.total_cmp(&threshold).is_eq() {
            keep[i] = true;
            taken += 1;
        }
    }
    keep
}

/// Straight-line SparF: returns `(out, alpha)`.
///
/// Loads are modeled as a buffer that is `NaN` everywhere except on fetched groups, so a
/// filter bug that reads an unfetched element poisons the output.
#[allow(clippy::too_many_arguments)]
pub fn sparf_scalar(
    q: &[f64],
    keys: &Matrix,
    values: &Matrix,
    value_mean: &[f64],
    r: usize,
    k: usize,
    m: usize,
    n: usize,
) -> (Vec<f64>, f64) {
    let d = q.len();
    let s = keys.rows();

    // step 1
    let mut abs_q = vec![0.0; d];
    for e in 0..d {
        abs_q[e] = q[e].abs();
    }
    let mut norm_q = 0.0;
    for e in 0..d {
        norm_q += abs_q[e];
    }
    let emb_keep = if norm_q == 0.0 {
        let mut keep = vec![false; d];
        for slot in keep.iter_mut().take(r) {
            *slot = true;
        }
        keep
    } else {
        top_indices(&abs_q, r)
    };

    // step 2: fetch every embedding group holding a kept embedding
    let mut kt_buf = vec![f64::NAN; d * s];
    for g in 0..d.div_ceil(m) {
        let lo = g * m;
        let hi = (lo + m).min(d);
        let mut hit = false;
        for e in lo..hi {
            hit |= emb_keep[e];
        }
        if hit {
            for e in lo..hi {
                for t in 0..s {
                    kt_buf[e * s + t] = keys.get(t, e);
                }
            }
        }
    }

    // steps 3-4
    let mut shat = vec![0.0; s];
    if norm_q == 0.0 {
        for x in shat.iter_mut() {
            *x = 1.0 / s as f64;
        }
    } else {
        let mut norm_kept = 0.0;
        for e in 0..d {
            if emb_keep[e] {
                norm_kept += abs_q[e];
            }
        }
        let temp = (d as f64 * norm_kept / norm_q).sqrt();
        let mut logits = vec![0.0; s];
        for t in 0..s {
            let mut acc = 0.0;
            for e in 0..d {
                if emb_keep[e] {
                    acc += q[e] * kt_buf[e * s + t];
                }
            }
            logits[t] = acc / temp;
        }
        let mut mx = f64::NEG_INFINITY;
        for t in 0..s {
            if logits[t] > mx {
                mx = logits[t];
            }
        }
        let mut z = 0.0;
        for t in 0..s {
            shat[t] = (logits[t] - mx).exp();
            z += shat[t];
        }
        for t in 0..s {
            shat[t] /= z;
        }
    }

    // steps 5-7 (mask is all zeros for exact-length sequences)
    let tok_keep = top_indices(&shat, k);
    let mut alpha = 0.0;
    for t in 0..s {
        if tok_keep[t] {
            alpha += shat[t];
        }
    }
    alpha = alpha.clamp(0.0, 1.0);

    // step 8
    let mut k_buf = vec![f64::NAN; s * d];
    let mut v_buf = vec![f64::NAN; s * d];
    for g in 0..s.div_ceil(n) {
        let lo = g * n;
        let hi = (lo + n).min(s);
        let mut hit = false;
        for t in lo..hi {
            hit |= tok_keep[t];
        }
        if hit {
            for t in lo..hi {
                for e in 0..d {
                    k_buf[t * d + e] = keys.get(t, e);
                    v_buf[t * d + e] = values.get(t, e);
                }
            }
        }
    }

    // steps 9-11
    let scale = (d as f64).sqrt();
    let mut kept = Vec::new();
    let mut logits = Vec::new();
    for t in 0..s {
        if tok_keep[t] {
            let mut acc = 0.0;
            for e in 0..d {
                acc += q[e] * k_buf[t * d + e];
            }
            kept.push(t);
            logits.push(acc / scale);
        }
    }
    let mut mx = f64::NEG_INFINITY;
    for &x in &logits {
        if x > mx {
            mx = x;
        }
    }
    let mut w = vec![0.0; logits.len()];
    let mut z = 0.0;
    for (i, &x) in logits.iter().enumerate() {
        w[i] = (x - mx).exp();
        z += w[i];
    }
    let mut out = vec![0.0; d];
    for (i, &t) in kept.iter().enumerate() {
        let p = w[i] / z;
        for e in 0..d {
            out[e] += p * v_buf[t * d + e];
        }
    }
    for e in 0..d {
        out[e] = alpha * out[e] + (1.0 - alpha) * value_mean[e];
    }
    (out, alpha)
}

/// Straight-line dense attention.
pub fn dense_scalar(q: &[f64], keys: &Matrix, values: &Matrix) -> Vec<f64> {
    let d = q.len();
    let s = keys.rows();
    let scale = (d as f64).sqrt();
    let mut logits = vec![0.0; s];
    for t in 0..s {
        let mut acc = 0.0;
        for e in 0..d {
            acc += q[e] * keys.get(t, e);
        }
        logits[t] = acc / scale;
    }
    let mx = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut z = 0.0;
    for x in logits.iter_mut() {
        *x = (*x - mx).exp();
        z += *x;
    }
    let mut out = vec![0.0; d];
    for t in 0..s {
        for e in 0..d {
            out[e] += logits[t] / z * values.get(t, e);
        }
    }
    out
}

/// Direct gather of the listed rows of `source`.
pub fn gather(source: &Matrix, idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter()
        .map(|&i| (0..source.cols()).map(|c| source.get(i, c)).collect())
        .collect()
}

/// Column means of `values`.
pub fn column_means(values: &Matrix) -> Vec<f64> {
    let mut sums = vec![0.0; values.cols()];
    for r in 0..values.rows() {
        for (c, s) in sums.iter_mut().enumerate() {
            *s += values.get(r, c);
        }
    }
    sums.iter().map(|s| s / values.rows() as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_indices_threshold_ties() {
        assert_eq!(top_indices(&[3.0, 3.0, 1.0], 1), vec![true, false, false]);
        assert_eq!(top_indices(&[1.0, 2.0, 2.0, 2.0], 2), vec![false, true, true, false]);
    }

    #[test]
    fn dense_scalar_hand_value() {
        let k = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let out = dense_scalar(&[1.0, 0.0], &k, &k);
        assert!((out[0] - 0.669_761_549_326_656_9).abs() < 1e-12);
    }
}
