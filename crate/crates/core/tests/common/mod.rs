//! Independent dense, scalar-loop reference implementations used as test
//! oracles. Nothing here calls into the crate's numeric code paths.

#![allow(dead_code, clippy::needless_range_loop)]

use std::collections::HashSet;

use rand::Rng;

pub type Dense = Vec<Vec<f64>>;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kind {
    Euclidean,
    Cosine,
    Kl,
}

/// Joint `(M+N)^2` matrix `D^{-1/2} A D^{-1/2}`.
pub fn dense_normalized(m: usize, n: usize, edges: &[(usize, usize)]) -> Dense {
    let size = m + n;
    let mut a = vec![vec![0.0; size]; size];
    for &(u, i) in edges {
        a[u][m + i] = 1.0;
        a[m + i][u] = 1.0;
    }
    let deg: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let mut out = vec![vec![0.0; size]; size];
    for r in 0..size {
        for c in 0..size {
            if a[r][c] != 0.0 {
                out[r][c] = a[r][c] / deg[r].sqrt() / deg[c].sqrt();
            }
        }
    }
    out
}

pub fn matmul(a: &Dense, x: &Dense) -> Dense {
    let d = x.first().map_or(0, Vec::len);
    let mut out = vec![vec![0.0; d]; a.len()];
    for r in 0..a.len() {
        for k in 0..a.len() {
            if a[r][k] != 0.0 {
                for c in 0..d {
                    out[r][c] += a[r][k] * x[k][c];
                }
            }
        }
    }
    out
}

/// Sum of squares with Neumaier compensation.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn euclid(x: &[f64], y: &[f64]) -> f64 {
    compensated_sum(x.iter().zip(y).map(|(a, b)| (a - b) * (a - b))).sqrt()
}

pub fn cosine(x: &[f64], y: &[f64], eps: f64) -> f64 {
    let dot = compensated_sum(x.iter().zip(y).map(|(a, b)| a * b));
    let nx = compensated_sum(x.iter().map(|a| a * a)).sqrt();
    let ny = compensated_sum(y.iter().map(|a| a * a)).sqrt();
    1.0 - (dot / (nx * ny + eps)).abs()
}

pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// Per-component `X_t ln(X_t / Y_t)` summed, after softmax.
pub fn kl(x: &[f64], y: &[f64]) -> f64 {
    let p = softmax(x);
    let q = softmax(y);
    let mut total = 0.0;
    for t in 0..p.len() {
        total += p[t] * (p[t] / q[t]).ln();
    }
    total
}

pub fn dist(kind: Kind, x: &[f64], y: &[f64], eps: f64) -> f64 {
    match kind {
        Kind::Euclidean => euclid(x, y),
        Kind::Cosine => cosine(x, y, eps),
        Kind::Kl => kl(x, y),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleCfg {
    pub alpha: f64,
    pub beta: f64,
    pub kind: Kind,
    pub eps: f64,
    pub layers: usize,
    pub mean: bool,
}

/// One fused layer, node by node.
pub fn oracle_fuse(cfg: &OracleCfg, old: &Dense, new: &Dense) -> Dense {
    old.iter()
        .zip(new)
        .map(|(o, n)| {
            let d = dist(cfg.kind, o, n, cfg.eps);
            let score_new = cfg.alpha * (1.0 + cfg.beta * d).ln();
            let w_old = 1.0 / (1.0 + score_new);
            let w_new = score_new / (1.0 + score_new);
            o.iter().zip(n).map(|(a, b)| w_old * a + w_new * b).collect()
        })
        .collect()
}

pub fn oracle_forward(cfg: &OracleCfg, adj: &Dense, base: &Dense) -> Dense {
    if cfg.mean {
        let mut sum = base.clone();
        let mut cur = base.clone();
        for _ in 0..cfg.layers {
            cur = matmul(adj, &cur);
            for (s, c) in sum.iter_mut().zip(&cur) {
                for (a, b) in s.iter_mut().zip(c) {
                    *a += b;
                }
            }
        }
        let k = (cfg.layers + 1) as f64;
        sum.iter().map(|r| r.iter().map(|v| v / k).collect()).collect()
    } else {
        let mut cur = base.clone();
        for _ in 0..cfg.layers {
            let new = matmul(adj, &cur);
            cur = oracle_fuse(cfg, &cur, &new);
        }
        cur
    }
}

pub fn random_edges<R: Rng>(rng: &mut R, m: usize, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for u in 0..m {
        for i in 0..n {
            if rng.gen_bool(p) {
                edges.push((u, i));
            }
        }
    }
    edges
}

pub fn random_dense<R: Rng>(rng: &mut R, rows: usize, d: usize, scale: f64) -> Dense {
    (0..rows)
        .map(|_| (0..d).map(|_| rng.gen_range(-scale..scale)).collect())
        .collect()
}

/// Full sort of every unmasked item: score descending, index ascending.
pub fn brute_rank(scores: &[f64], mask: &HashSet<usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).filter(|i| !mask.contains(i)).collect();
    idx.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
    idx
}

pub fn brute_recall(ranked: &[usize], relevant: &HashSet<usize>, k: usize) -> f64 {
    let top: HashSet<usize> = ranked.iter().take(k).copied().collect();
    top.intersection(relevant).count() as f64 / relevant.len() as f64
}

pub fn brute_ndcg(ranked: &[usize], relevant: &HashSet<usize>, k: usize) -> f64 {
    let mut dcg = 0.0;
    for (pos, item) in ranked.iter().take(k).enumerate() {
        if relevant.contains(item) {
            dcg += 1.0 / ((pos as f64) + 2.0).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..k.min(relevant.len()) {
        idcg += 1.0 / ((pos as f64) + 2.0).log2();
    }
    dcg / idcg
}
