//! Distances between a node's pre-aggregation (`old`) and post-aggregation
//! (`new`) layer vectors.
//!
//! Each metric comes with its partial derivatives with respect to both
//! arguments, which the propagation backward pass consumes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SagcnError};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    Euclidean,
    Cosine,
    #[serde(rename = "kl")]
    KlDivergence,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 3] = [
        DistanceKind::Euclidean,
        DistanceKind::Cosine,
        DistanceKind::KlDivergence,
    ];

    pub fn token(self) -> &'static str {
        match self {
            DistanceKind::Euclidean => "euclidean",
            DistanceKind::Cosine => "cosine",
            DistanceKind::KlDivergence => "kl",
        }
    }

    /// Scale factor that brings this metric's typical magnitude near 1e-2.
    pub fn default_beta(self) -> f64 {
        match self {
            DistanceKind::Euclidean => 1.0,
            DistanceKind::Cosine => 0.001,
            DistanceKind::KlDivergence => 100.0,
        }
    }
}

impl fmt::Display for DistanceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for DistanceKind {
    type Err = SagcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euclidean" => Ok(DistanceKind::Euclidean),
            "cosine" => Ok(DistanceKind::Cosine),
            "kl" => Ok(DistanceKind::KlDivergence),
            other => Err(SagcnError::Config(format!(
                "unknown distance `{other}` (expected euclidean, cosine or kl)"
            ))),
        }
    }
}

/// A metric together with its numerical-safety constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distance {
    pub kind: DistanceKind,
    /// Added to the cosine denominator.
    pub epsilon: f64,
}

impl Distance {
    pub fn new(kind: DistanceKind) -> Self {
        Self {
            kind,
            epsilon: DEFAULT_EPSILON,
        }
    }

    pub fn with_epsilon(kind: DistanceKind, epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(SagcnError::InvalidArgument(format!(
                "epsilon must be positive and finite, got {epsilon}"
            )));
        }
        Ok(Self { kind, epsilon })
    }

    pub fn eval(&self, pair: LayerVectorPair<'_>) -> f64 {
        self.eval_raw(pair.old, pair.new)
    }

    /// Unchecked evaluation for callers that already validated their input.
    pub(crate) fn eval_raw(&self, old: &[f64], new: &[f64]) -> f64 {
        match self.kind {
            DistanceKind::Euclidean => euclidean_raw(old, new),
            DistanceKind::Cosine => cosine_raw(old, new, self.epsilon),
            DistanceKind::KlDivergence => kl_raw(old, new),
        }
    }

    /// Accumulates `scale * ∂dist/∂old` into `grad_old` and
    /// `scale * ∂dist/∂new` into `grad_new`.
    pub fn accumulate_grad(
        &self,
        old: &[f64],
        new: &[f64],
        scale: f64,
        grad_old: &mut [f64],
        grad_new: &mut [f64],
    ) {
        match self.kind {
            DistanceKind::Euclidean => euclidean_grad(old, new, scale, grad_old, grad_new),
            DistanceKind::Cosine => cosine_grad(old, new, self.epsilon, scale, grad_old, grad_new),
            DistanceKind::KlDivergence => kl_grad(old, new, scale, grad_old, grad_new),
        }
    }
}

/// Validated pair of equal-length, finite layer vectors.
#[derive(Debug, Clone, Copy)]
pub struct LayerVectorPair<'a> {
    old: &'a [f64],
    new: &'a [f64],
}

impl<'a> LayerVectorPair<'a> {
    pub fn new(old: &'a [f64], new: &'a [f64]) -> Result<Self> {
        if old.len() != new.len() {
            return Err(SagcnError::Shape(format!(
                "layer vectors differ in dimension: {} vs {}",
                old.len(),
                new.len()
            )));
        }
        if let Some(t) = old.iter().chain(new).position(|x| !x.is_finite()) {
            return Err(SagcnError::NonFinite(format!(
                "layer vector component {} is not finite",
                t % old.len().max(1)
            )));
        }
        Ok(Self { old, new })
    }

    pub fn old(&self) -> &'a [f64] {
        self.old
    }

    pub fn new_vec(&self) -> &'a [f64] {
        self.new
    }

    pub fn dim(&self) -> usize {
        self.old.len()
    }
}

pub fn euclidean_distance(pair: LayerVectorPair<'_>) -> f64 {
    euclidean_raw(pair.old, pair.new)
}

pub fn cosine_distance(pair: LayerVectorPair<'_>, epsilon: f64) -> f64 {
    cosine_raw(pair.old, pair.new, epsilon)
}

/// KL divergence of `softmax(new)` from `softmax(old)`; `old` is the
/// reference distribution.
pub fn kl_distance(pair: LayerVectorPair<'_>) -> f64 {
    kl_raw(pair.old, pair.new)
}

pub fn distance(metric: &Distance, pair: LayerVectorPair<'_>) -> f64 {
    metric.eval(pair)
}

/// Natural-log softmax, computed with the max shift.
pub fn log_softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + x.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    x.iter().map(|v| v - lse).collect()
}

/// KL divergence between two explicit probability vectors, `Σ p ln(p/q)`.
pub fn kl_of_distributions(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .filter(|(&pt, _)| pt > 0.0)
        .map(|(&pt, &qt)| pt * (pt / qt).ln())
        .sum()
}

fn euclidean_raw(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

fn euclidean_grad(x: &[f64], y: &[f64], scale: f64, gx: &mut [f64], gy: &mut [f64]) {
    let d = euclidean_raw(x, y);
    if d == 0.0 {
        return;
    }
    let s = scale / d;
    for t in 0..x.len() {
        let diff = s * (x[t] - y[t]);
        gx[t] += diff;
        gy[t] -= diff;
    }
}

struct CosineParts {
    dot: f64,
    norm_x: f64,
    norm_y: f64,
    denom: f64,
}

fn cosine_parts(x: &[f64], y: &[f64], eps: f64) -> CosineParts {
    let mut dot = 0.0;
    let mut xx = 0.0;
    let mut yy = 0.0;
    for (a, b) in x.iter().zip(y) {
        dot += a * b;
        xx += a * a;
        yy += b * b;
    }
    let norm_x = xx.sqrt();
    let norm_y = yy.sqrt();
    CosineParts {
        dot,
        norm_x,
        norm_y,
        denom: norm_x * norm_y + eps,
    }
}

fn cosine_raw(x: &[f64], y: &[f64], eps: f64) -> f64 {
    let p = cosine_parts(x, y, eps);
    1.0 - (p.dot / p.denom).abs()
}

fn cosine_grad(x: &[f64], y: &[f64], eps: f64, scale: f64, gx: &mut [f64], gy: &mut [f64]) {
    let p = cosine_parts(x, y, eps);
    let sim = p.dot / p.denom;
    // d(1 - |sim|) = -sign(sim) d(sim); sign(0) taken as 0
    let sign = if sim > 0.0 {
        1.0
    } else if sim < 0.0 {
        -1.0
    } else {
        return;
    };
    let s = -sign * scale;
    let inv = 1.0 / p.denom;
    let ratio = p.dot * inv * inv;
    let cx = if p.norm_x > 0.0 { ratio * p.norm_y / p.norm_x } else { 0.0 };
    let cy = if p.norm_y > 0.0 { ratio * p.norm_x / p.norm_y } else { 0.0 };
    for t in 0..x.len() {
        gx[t] += s * (y[t] * inv - cx * x[t]);
        gy[t] += s * (x[t] * inv - cy * y[t]);
    }
}

fn kl_raw(x: &[f64], y: &[f64]) -> f64 {
    let lx = log_softmax(x);
    let ly = log_softmax(y);
    lx.iter()
        .zip(&ly)
        .map(|(a, b)| a.exp() * (a - b))
        .sum::<f64>()
        .max(0.0)
}

fn kl_grad(x: &[f64], y: &[f64], scale: f64, gx: &mut [f64], gy: &mut [f64]) {
    let lx = log_softmax(x);
    let ly = log_softmax(y);
    let px: Vec<f64> = lx.iter().map(|v| v.exp()).collect();
    // ∂/∂x_s = X_s (g_s - Σ_t X_t g_t) with g = ln X - ln Y
    let mean_gap: f64 = px.iter().zip(lx.iter().zip(&ly)).map(|(p, (a, b))| p * (a - b)).sum();
    for t in 0..x.len() {
        let gap = lx[t] - ly[t];
        gx[t] += scale * px[t] * (gap - mean_gap);
        gy[t] += scale * (ly[t].exp() - px[t]);
    }
}
