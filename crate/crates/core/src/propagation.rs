//! Neighborhood aggregation and distance-adaptive layer fusion.
//!
//! One self-adaptive layer takes the current table `cur`, aggregates
//! neighbors into `new = Â·cur`, then moves each node toward its aggregate by
//! an amount that grows with the distance between the two vectors:
//!
//! ```text
//! score_new = α ln(1 + β dist(cur_v, new_v))
//! e_v      <- cur_v / (1 + score_new) + new_v · score_new / (1 + score_new)
//! ```
//!
//! The output of the last layer is the final embedding. The mean baseline
//! instead averages the pure aggregation outputs `e^(0) .. e^(K)`.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;

use crate::distance::{Distance, DistanceKind, DEFAULT_EPSILON};
use crate::error::{Result, SagcnError};
use crate::graph::NormalizedAdjacency;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_LAYERS: usize = 3;
pub const DEFAULT_ALPHA: f64 = 1.5;

/// Users-then-items embedding matrix of shape `(M + N) x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    num_users: usize,
    data: Array2<f64>,
}

impl EmbeddingTable {
    pub fn zeros(num_users: usize, num_items: usize, dim: usize) -> Self {
        Self {
            num_users,
            data: Array2::zeros((num_users + num_items, dim)),
        }
    }

    /// Wraps a joint `(M + N) x d` matrix.
    pub fn from_joint(num_users: usize, data: Array2<f64>) -> Result<Self> {
        if num_users > data.nrows() {
            return Err(SagcnError::Shape(format!(
                "{num_users} users declared but table has {} rows",
                data.nrows()
            )));
        }
        Ok(Self {
            num_users,
            data: data.as_standard_layout().into_owned(),
        })
    }

    pub fn from_parts(users: Array2<f64>, items: Array2<f64>) -> Result<Self> {
        if users.ncols() != items.ncols() {
            return Err(SagcnError::Shape(format!(
                "user dim {} != item dim {}",
                users.ncols(),
                items.ncols()
            )));
        }
        let num_users = users.nrows();
        let data = ndarray::concatenate(Axis(0), &[users.view(), items.view()])
            .map_err(|e| SagcnError::Shape(e.to_string()))?;
        Self::from_joint(num_users, data)
    }

    /// Uniform random table in `±scale`, for tests and demos.
    pub fn random<R: Rng>(num_users: usize, num_items: usize, dim: usize, scale: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(num_users, num_items, dim);
        t.data.mapv_inplace(|_| rng.gen_range(-scale..=scale));
        t
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.data.nrows() - self.num_users
    }

    pub fn num_nodes(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn joint(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn joint_mut(&mut self) -> &mut Array2<f64> {
        &mut self.data
    }

    pub fn into_joint(self) -> Array2<f64> {
        self.data
    }

    pub fn users(&self) -> ArrayView2<'_, f64> {
        self.data.slice(ndarray::s![..self.num_users, ..])
    }

    pub fn items(&self) -> ArrayView2<'_, f64> {
        self.data.slice(ndarray::s![self.num_users.., ..])
    }

    pub fn user(&self, u: usize) -> &[f64] {
        self.node(u)
    }

    pub fn item(&self, i: usize) -> &[f64] {
        self.node(self.num_users + i)
    }

    pub fn node(&self, v: usize) -> &[f64] {
        let d = self.dim();
        &self.data.as_slice().expect("standard layout")[v * d..(v + 1) * d]
    }

    pub fn squared_norm(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &EmbeddingTable) -> bool {
        self.num_users == other.num_users && self.data.dim() == other.data.dim()
    }

    fn with_data(&self, data: Array2<f64>) -> Self {
        Self {
            num_users: self.num_users,
            data,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Aggregator {
    SelfAdaptive,
    MeanBaseline,
}

impl Aggregator {
    pub fn token(self) -> &'static str {
        match self {
            Aggregator::SelfAdaptive => "sagcn",
            Aggregator::MeanBaseline => "mean",
        }
    }
}

impl fmt::Display for Aggregator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

impl FromStr for Aggregator {
    type Err = SagcnError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sagcn" => Ok(Aggregator::SelfAdaptive),
            "mean" => Ok(Aggregator::MeanBaseline),
            other => Err(SagcnError::Config(format!(
                "unknown aggregator `{other}` (expected sagcn or mean)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionConfig {
    pub alpha: f64,
    pub beta: f64,
    pub distance: DistanceKind,
    pub epsilon: f64,
    pub num_layers: usize,
    pub aggregator: Aggregator,
}

impl FusionConfig {
    /// Self-adaptive config with the metric's default β.
    pub fn new(distance: DistanceKind) -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            beta: distance.default_beta(),
            distance,
            epsilon: DEFAULT_EPSILON,
            num_layers: DEFAULT_LAYERS,
            aggregator: Aggregator::SelfAdaptive,
        }
    }

    pub fn mean_baseline(num_layers: usize) -> Self {
        Self {
            num_layers,
            aggregator: Aggregator::MeanBaseline,
            ..Self::new(DistanceKind::Euclidean)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(SagcnError::Config(format!("alpha must be > 0, got {}", self.alpha)));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(SagcnError::Config(format!("beta must be > 0, got {}", self.beta)));
        }
        if self.num_layers == 0 {
            return Err(SagcnError::Config("num_layers must be >= 1".into()));
        }
        Distance::with_epsilon(self.distance, self.epsilon)
            .map_err(|e| SagcnError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn metric(&self) -> Distance {
        Distance {
            kind: self.distance,
            epsilon: self.epsilon,
        }
    }

    fn score(&self, dist: f64) -> f64 {
        self.alpha * (self.beta * dist).ln_1p()
    }

    /// `∂score_new/∂dist`.
    fn score_slope(&self, dist: f64) -> f64 {
        self.alpha * self.beta / (1.0 + self.beta * dist)
    }
}

/// Convex weights for the old and new vector of one node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FusionWeights {
    pub score_old: f64,
    pub score_new: f64,
    pub w_old: f64,
    pub w_new: f64,
}

impl FusionWeights {
    fn from_score(score_new: f64) -> Self {
        let total = 1.0 + score_new;
        Self {
            score_old: 1.0,
            score_new,
            w_old: 1.0 / total,
            w_new: score_new / total,
        }
    }
}

pub fn fusion_weights(cfg: &FusionConfig, dist: f64) -> Result<FusionWeights> {
    if !dist.is_finite() {
        return Err(SagcnError::NonFinite(format!("distance {dist}")));
    }
    if dist < 0.0 {
        return Err(SagcnError::InvalidArgument(format!("negative distance {dist}")));
    }
    Ok(FusionWeights::from_score(cfg.score(dist)))
}

/// One round of `Â · E` over the joint node space.
pub fn aggregate_neighbors(adj: &NormalizedAdjacency, emb: &EmbeddingTable) -> Result<EmbeddingTable> {
    if adj.num_users() != emb.num_users() || adj.num_items() != emb.num_items() {
        return Err(SagcnError::Shape(format!(
            "adjacency is {}x{} but table is {}x{}",
            adj.num_users(),
            adj.num_items(),
            emb.num_users(),
            emb.num_items()
        )));
    }
    Ok(emb.with_data(adj.apply(emb.joint())?))
}

/// Per-node distance-weighted blend of `old` toward `new`.
pub fn fuse_layer(cfg: &FusionConfig, old: &EmbeddingTable, new: &EmbeddingTable) -> Result<EmbeddingTable> {
    cfg.validate()?;
    if !old.same_shape(new) {
        return Err(SagcnError::Shape("old and new tables differ in shape".into()));
    }
    if !old.is_finite() || !new.is_finite() {
        return Err(SagcnError::NonFinite("fusion input".into()));
    }
    let (fused, _) = fuse_rows(cfg, old, new);
    Ok(fused)
}

fn fuse_rows(cfg: &FusionConfig, old: &EmbeddingTable, new: &EmbeddingTable) -> (EmbeddingTable, Array1<f64>) {
    let metric = cfg.metric();
    let mut out = Array2::<f64>::zeros(old.data.raw_dim());
    let mut dists = Array1::<f64>::zeros(old.num_nodes());
    Zip::from(out.rows_mut())
        .and(old.data.rows())
        .and(new.data.rows())
        .and(&mut dists)
        .par_for_each(|mut out_v, old_v, new_v, dist_v| {
            let o = old_v.as_slice().expect("standard layout");
            let n = new_v.as_slice().expect("standard layout");
            let dist = metric.eval_raw(o, n);
            let w = FusionWeights::from_score(cfg.score(dist));
            for t in 0..o.len() {
                out_v[t] = w.w_old * o[t] + w.w_new * n[t];
            }
            *dist_v = dist;
        });
    (old.with_data(out), dists)
}

/// Final embeddings for prediction.
pub fn forward(cfg: &FusionConfig, adj: &NormalizedAdjacency, base: &EmbeddingTable) -> Result<EmbeddingTable> {
    Ok(forward_traced(cfg, adj, base)?.output)
}

/// Intermediate state of a forward pass, retained for [`backward`].
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    pub output: EmbeddingTable,
    layers: Vec<LayerTrace>,
    cfg: FusionConfig,
}

#[derive(Debug, Clone)]
struct LayerTrace {
    input: EmbeddingTable,
    aggregated: EmbeddingTable,
    dists: Array1<f64>,
}

pub fn forward_traced(cfg: &FusionConfig, adj: &NormalizedAdjacency, base: &EmbeddingTable) -> Result<ForwardTrace> {
    cfg.validate()?;
    if !base.is_finite() {
        return Err(SagcnError::NonFinite("base embeddings".into()));
    }
    let mut layers = Vec::with_capacity(cfg.num_layers);
    let output = match cfg.aggregator {
        Aggregator::SelfAdaptive => {
            let mut current = base.clone();
            for k in 0..cfg.num_layers {
                let aggregated = aggregate_neighbors(adj, &current)?;
                let (fused, dists) = fuse_rows(cfg, &current, &aggregated);
                if !fused.is_finite() {
                    return Err(SagcnError::NonFinite(format!("fused output of layer {}", k + 1)));
                }
                layers.push(LayerTrace {
                    input: current,
                    aggregated,
                    dists,
                });
                current = fused;
            }
            current
        }
        Aggregator::MeanBaseline => {
            let mut sum = base.data.clone();
            let mut current = base.clone();
            for k in 0..cfg.num_layers {
                current = aggregate_neighbors(adj, &current)?;
                if !current.is_finite() {
                    return Err(SagcnError::NonFinite(format!("aggregation of layer {}", k + 1)));
                }
                sum += &current.data;
            }
            sum /= (cfg.num_layers + 1) as f64;
            base.with_data(sum)
        }
    };
    Ok(ForwardTrace {
        output,
        layers,
        cfg: *cfg,
    })
}

/// Pulls a gradient with respect to the final embeddings back to the base
/// table, including the paths through distances and fusion weights.
pub fn backward(trace: &ForwardTrace, adj: &NormalizedAdjacency, grad_output: &Array2<f64>) -> Result<Array2<f64>> {
    let cfg = &trace.cfg;
    if grad_output.dim() != trace.output.data.dim() {
        return Err(SagcnError::Shape("gradient does not match forward output".into()));
    }
    match cfg.aggregator {
        Aggregator::SelfAdaptive => {
            let metric = cfg.metric();
            let mut grad = grad_output.clone();
            for (k, layer) in trace.layers.iter().enumerate().rev() {
                let mut g_input = Array2::<f64>::zeros(grad.raw_dim());
                let mut g_aggr = Array2::<f64>::zeros(grad.raw_dim());
                Zip::from(g_input.rows_mut())
                    .and(g_aggr.rows_mut())
                    .and(grad.rows())
                    .and(layer.input.data.rows())
                    .and(layer.aggregated.data.rows())
                    .and(&layer.dists)
                    .par_for_each(|mut gi, mut ga, g, old, new, &dist| {
                        let gi = gi.as_slice_mut().expect("standard layout");
                        let ga = ga.as_slice_mut().expect("standard layout");
                        let g = g.as_slice().expect("standard layout");
                        let old = old.as_slice().expect("standard layout");
                        let new = new.as_slice().expect("standard layout");
                        let score = cfg.score(dist);
                        let w = FusionWeights::from_score(score);
                        let mut g_wnew = 0.0;
                        for t in 0..g.len() {
                            gi[t] = w.w_old * g[t];
                            ga[t] = w.w_new * g[t];
                            g_wnew += g[t] * (new[t] - old[t]);
                        }
                        let total = 1.0 + score;
                        let g_dist = g_wnew / (total * total) * cfg.score_slope(dist);
                        if g_dist != 0.0 {
                            metric.accumulate_grad(old, new, g_dist, gi, ga);
                        }
                    });
                g_input += &adj.apply(g_aggr.view())?;
                if g_input.iter().any(|x| !x.is_finite()) {
                    return Err(SagcnError::NonFinite(format!("gradient at layer {}", k + 1)));
                }
                grad = g_input;
            }
            Ok(grad)
        }
        Aggregator::MeanBaseline => {
            let share = grad_output / (cfg.num_layers + 1) as f64;
            let mut grad = share.clone();
            for _ in 0..cfg.num_layers {
                grad = adj.apply(grad.view())? + &share;
            }
            Ok(grad)
        }
    }
}
