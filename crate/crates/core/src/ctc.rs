//! Connectionist temporal classification: the blank-augmented alignment
//! loss with its gradient, and greedy best-path decoding.
//!
//! The blank label is always the last column of the frame matrix.

use crate::error::{Error, Result};
use crate::ops::{argmax, log_softmax_into, log_sum_exp};
use crate::tensor::{Real, Tensor};
use crate::vocab::LabelSeq;

/// Removes consecutive repeats, then blanks.
pub fn collapse_mapping(path: &[usize], blank: usize) -> LabelSeq {
    let mut out = Vec::new();
    let mut prev = None;
    for &l in path {
        if Some(l) != prev && l != blank {
            out.push(l);
        }
        prev = Some(l);
    }
    out
}

/// Minimum number of frames able to emit `target`: one per label plus one
/// blank between each pair of identical neighbours.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

fn frame_dims<T: Real>(m: &Tensor<T>, op: &'static str) -> Result<(usize, usize)> {
    match m.shape() {
        &[t, k] if k >= 1 => Ok((t, k)),
        s => Err(Error::dim(op, s, &[0, 0])),
    }
}

/// Negative log-likelihood of `target` under per-frame softmax of `logits`
/// (`T x K`), summed over all alignments, and its gradient with respect to
/// the logits.
pub fn ctc_loss<T: Real>(logits: &Tensor<T>, target: &[usize]) -> Result<(T, Tensor<T>)> {
    let (t_len, k) = frame_dims(logits, "ctc_loss")?;
    let blank = k - 1;
    if let Some(&bad) = target.iter().find(|&&l| l >= blank) {
        return Err(Error::Domain(format!(
            "CTC target label {bad} is not a character (blank is {blank})"
        )));
    }
    let needed = min_frames(target);
    if t_len < needed {
        return Err(Error::Infeasible {
            needed,
            available: t_len,
        });
    }
    let neg_inf = T::neg_infinity();
    let s_len = 2 * target.len() + 1;
    let ext: Vec<usize> = (0..s_len)
        .map(|s| if s % 2 == 0 { blank } else { target[s / 2] })
        .collect();
    let skip_ok: Vec<bool> = (0..s_len)
        .map(|s| s >= 2 && ext[s] != blank && ext[s] != ext[s - 2])
        .collect();

    let mut lp = vec![T::zero(); t_len * k];
    for (row, out) in logits.data().chunks_exact(k).zip(lp.chunks_exact_mut(k)) {
        log_softmax_into(row, out);
    }
    let lp_at = |t: usize, s: usize| lp[t * k + ext[s]];

    let mut alpha = vec![neg_inf; t_len * s_len];
    alpha[0] = lp_at(0, 0);
    if s_len > 1 {
        alpha[1] = lp_at(0, 1);
    }
    for t in 1..t_len {
        for s in 0..s_len {
            let prev = &alpha[(t - 1) * s_len..t * s_len];
            let mut terms = [prev[s], neg_inf, neg_inf];
            if s >= 1 {
                terms[1] = prev[s - 1];
            }
            if skip_ok[s] {
                terms[2] = prev[s - 2];
            }
            alpha[t * s_len + s] = log_sum_exp(&terms) + lp_at(t, s);
        }
    }
    let last = &alpha[(t_len - 1) * s_len..];
    let log_p = if s_len > 1 {
        log_sum_exp(&[last[s_len - 1], last[s_len - 2]])
    } else {
        last[0]
    };
    if !log_p.is_finite() {
        return Err(Error::NonFinite(format!("CTC log-likelihood is {log_p}")));
    }

    let mut beta = vec![neg_inf; t_len * s_len];
    let tl = t_len - 1;
    beta[tl * s_len + s_len - 1] = lp_at(tl, s_len - 1);
    if s_len > 1 {
        beta[tl * s_len + s_len - 2] = lp_at(tl, s_len - 2);
    }
    for t in (0..tl).rev() {
        for s in 0..s_len {
            let next = &beta[(t + 1) * s_len..(t + 2) * s_len];
            let mut terms = [next[s], neg_inf, neg_inf];
            if s + 1 < s_len {
                terms[1] = next[s + 1];
            }
            if s + 2 < s_len && skip_ok[s + 2] {
                terms[2] = next[s + 2];
            }
            beta[t * s_len + s] = log_sum_exp(&terms) + lp_at(t, s);
        }
    }

    let mut grad = Tensor::zeros(&[t_len, k]);
    let mut occupancy = vec![neg_inf; k];
    for t in 0..t_len {
        occupancy.fill(neg_inf);
        for s in 0..s_len {
            let g = alpha[t * s_len + s] + beta[t * s_len + s] - lp_at(t, s);
            let o = &mut occupancy[ext[s]];
            *o = log_sum_exp(&[*o, g]);
        }
        let row = &mut grad.data_mut()[t * k..(t + 1) * k];
        for c in 0..k {
            row[c] = lp[t * k + c].exp() - (occupancy[c] - log_p).exp();
        }
    }
    Ok((-log_p, grad))
}

/// Per-frame argmax (ties to the lowest index) followed by
/// [`collapse_mapping`]. The blank is the last column.
pub fn best_path_decode<T: Real>(prob_seq: &Tensor<T>) -> Result<LabelSeq> {
    let (_, k) = frame_dims(prob_seq, "best_path_decode")?;
    let path: Vec<usize> = prob_seq.data().chunks_exact(k).map(argmax).collect();
    Ok(collapse_mapping(&path, k - 1))
}
