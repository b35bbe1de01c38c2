//! BPR objective and its exact gradient with respect to the base
//! embeddings, taken through the whole propagation stack.

use ndarray::Array2;

use crate::error::{Result, SagcnError};
use crate::graph::NormalizedAdjacency;
use crate::propagation::{backward, forward_traced, EmbeddingTable, FusionConfig};

use super::sampler::BprTriple;

/// `ln(1 + e^x)` without overflow.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `Σ -ln σ(pos - neg) + λ ||E0||²`, summed over the batch.
pub fn bpr_loss(scores_pos: &[f64], scores_neg: &[f64], base: &EmbeddingTable, lambda: f64) -> Result<f64> {
    if scores_pos.len() != scores_neg.len() {
        return Err(SagcnError::Shape(format!(
            "{} positive scores vs {} negative scores",
            scores_pos.len(),
            scores_neg.len()
        )));
    }
    if scores_pos.iter().chain(scores_neg).any(|s| !s.is_finite()) {
        return Err(SagcnError::NonFinite("prediction score".into()));
    }
    let ranking: f64 = scores_pos
        .iter()
        .zip(scores_neg)
        .map(|(p, n)| softplus(n - p))
        .sum();
    Ok(ranking + lambda * base.squared_norm())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Batch loss and its gradient with respect to every entry of `base`.
pub fn loss_and_gradient(
    cfg: &FusionConfig,
    lambda: f64,
    adj: &NormalizedAdjacency,
    base: &EmbeddingTable,
    batch: &[BprTriple],
) -> Result<(f64, Array2<f64>)> {
    let trace = forward_traced(cfg, adj, base)?;
    let emb = &trace.output;
    let m = emb.num_users();
    let d = emb.dim();

    let mut pos = Vec::with_capacity(batch.len());
    let mut neg = Vec::with_capacity(batch.len());
    for t in batch {
        if t.user >= m || t.pos_item >= emb.num_items() || t.neg_item >= emb.num_items() {
            return Err(SagcnError::OutOfRange {
                what: "triple",
                index: t.user.max(t.pos_item).max(t.neg_item),
                limit: m.max(emb.num_items()),
            });
        }
        let eu = emb.user(t.user);
        pos.push(dot(eu, emb.item(t.pos_item)));
        neg.push(dot(eu, emb.item(t.neg_item)));
    }
    let loss = bpr_loss(&pos, &neg, base, lambda)?;

    let mut grad_out = Array2::<f64>::zeros(emb.joint().raw_dim());
    {
        let g = grad_out.as_slice_mut().expect("standard layout");
        for (k, t) in batch.iter().enumerate() {
            // d softplus(neg - pos) / d(pos - neg) = -σ(neg - pos)
            let coef = -sigmoid(neg[k] - pos[k]);
            if coef == 0.0 {
                continue;
            }
            let eu = emb.user(t.user);
            let ei = emb.item(t.pos_item);
            let ej = emb.item(t.neg_item);
            let (u, i, j) = (t.user * d, (m + t.pos_item) * d, (m + t.neg_item) * d);
            for c in 0..d {
                g[u + c] += coef * (ei[c] - ej[c]);
                g[i + c] += coef * eu[c];
                g[j + c] -= coef * eu[c];
            }
        }
    }

    let mut grad = backward(&trace, adj, &grad_out)?;
    grad.scaled_add(2.0 * lambda, &base.joint());
    if grad.iter().any(|x| !x.is_finite()) {
        return Err(SagcnError::NonFinite("base embedding gradient".into()));
    }
    Ok((loss, grad))
}

pub fn loss_gradient(
    cfg: &FusionConfig,
    lambda: f64,
    adj: &NormalizedAdjacency,
    base: &EmbeddingTable,
    batch: &[BprTriple],
) -> Result<Array2<f64>> {
    Ok(loss_and_gradient(cfg, lambda, adj, base, batch)?.1)
}

/// Loss value only, for finite-difference checks.
pub fn batch_loss(
    cfg: &FusionConfig,
    lambda: f64,
    adj: &NormalizedAdjacency,
    base: &EmbeddingTable,
    batch: &[BprTriple],
) -> Result<f64> {
    let emb = forward_traced(cfg, adj, base)?.output;
    let pos: Vec<f64> = batch.iter().map(|t| dot(emb.user(t.user), emb.item(t.pos_item))).collect();
    let neg: Vec<f64> = batch.iter().map(|t| dot(emb.user(t.user), emb.item(t.neg_item))).collect();
    bpr_loss(&pos, &neg, base, lambda)
}
