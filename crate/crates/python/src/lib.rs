//! Python bindings for `sagcn`.
//!
//! Embeddings cross the boundary as lists of rows. Errors map to
//! `ValueError` (bad input), `ArithmeticError` (non-finite values or
//! divergence) and `OSError` (file access).

use std::path::PathBuf;

use ndarray::Array2;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sagcn::distance::{self as dist, DistanceKind, LayerVectorPair};
use sagcn::error::SagcnError;
use sagcn::evaluation;
use sagcn::io::checkpoint;
use sagcn::propagation::{self as prop, Aggregator};
use sagcn::training::{self, xavier_init, TrainConfig};

fn to_py(err: SagcnError) -> PyErr {
    match err {
        SagcnError::NonFinite(_) | SagcnError::Diverged { .. } => PyArithmeticError::new_err(err.to_string()),
        SagcnError::Io(_) => PyOSError::new_err(err.to_string()),
        _ => PyValueError::new_err(err.to_string()),
    }
}

fn parse_kind(kind: &str) -> PyResult<DistanceKind> {
    kind.parse().map_err(to_py)
}

#[pyclass(name = "InteractionGraph", module = "sagcn_py", frozen)]
struct PyGraph {
    inner: sagcn::InteractionGraph,
    adj: sagcn::NormalizedAdjacency,
}

#[pymethods]
impl PyGraph {
    #[new]
    fn new(num_users: usize, num_items: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        let inner = sagcn::InteractionGraph::new(num_users, num_items, &edges).map_err(to_py)?;
        let adj = sagcn::NormalizedAdjacency::from_graph(&inner);
        Ok(Self { inner, adj })
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }

    #[getter]
    fn num_edges(&self) -> usize {
        self.inner.num_edges()
    }

    fn sparsity(&self) -> f64 {
        self.inner.sparsity()
    }

    fn user_neighbors(&self, user: usize) -> PyResult<Vec<usize>> {
        if user >= self.inner.num_users() {
            return Err(PyValueError::new_err(format!("user {user} out of range")));
        }
        Ok(self.inner.user_neighbors(user).to_vec())
    }

    /// Entry of the normalized adjacency in the joint user-then-item index.
    fn weight(&self, row: usize, col: usize) -> PyResult<f64> {
        let n = self.adj.num_nodes();
        if row >= n || col >= n {
            return Err(PyValueError::new_err(format!("index out of range for {n} nodes")));
        }
        Ok(self.adj.weight(row, col))
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.inner.edges().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "InteractionGraph(users={}, items={}, edges={})",
            self.inner.num_users(),
            self.inner.num_items(),
            self.inner.num_edges()
        )
    }
}

#[pyclass(name = "FusionConfig", module = "sagcn_py", from_py_object)]
#[derive(Clone)]
struct PyFusionConfig {
    inner: prop::FusionConfig,
}

#[pymethods]
impl PyFusionConfig {
    /// `beta=None` picks the metric's default.
    #[new]
    #[pyo3(signature = (distance="euclidean", alpha=1.5, beta=None, layers=3, aggregator="sagcn", epsilon=1e-8))]
    fn new(distance: &str, alpha: f64, beta: Option<f64>, layers: usize, aggregator: &str, epsilon: f64) -> PyResult<Self> {
        let kind = parse_kind(distance)?;
        let inner = prop::FusionConfig {
            alpha,
            beta: beta.unwrap_or_else(|| kind.default_beta()),
            epsilon,
            num_layers: layers,
            aggregator: aggregator.parse::<Aggregator>().map_err(to_py)?,
            ..prop::FusionConfig::new(kind)
        };
        inner.validate().map_err(to_py)?;
        Ok(Self { inner })
    }

    #[getter]
    fn distance(&self) -> &'static str {
        self.inner.distance.token()
    }

    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.alpha
    }

    #[getter]
    fn beta(&self) -> f64 {
        self.inner.beta
    }

    #[getter]
    fn layers(&self) -> usize {
        self.inner.num_layers
    }

    #[getter]
    fn aggregator(&self) -> &'static str {
        self.inner.aggregator.token()
    }

    fn __repr__(&self) -> String {
        format!(
            "FusionConfig(distance={:?}, alpha={}, beta={}, layers={}, aggregator={:?})",
            self.inner.distance.token(),
            self.inner.alpha,
            self.inner.beta,
            self.inner.num_layers,
            self.inner.aggregator.token()
        )
    }
}

#[pyclass(name = "EmbeddingTable", module = "sagcn_py", from_py_object)]
#[derive(Clone)]
struct PyEmbeddingTable {
    inner: sagcn::EmbeddingTable,
}

#[pymethods]
impl PyEmbeddingTable {
    /// `rows` holds users first, then items.
    #[new]
    fn new(num_users: usize, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(PyValueError::new_err("rows must all have the same length"));
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), dim), flat).map_err(|e| PyValueError::new_err(e.to_string()))?;
        let inner = sagcn::EmbeddingTable::from_joint(num_users, data).map_err(to_py)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    #[pyo3(signature = (num_users, num_items, dim=64, seed=2024))]
    fn xavier(num_users: usize, num_items: usize, dim: usize, seed: u64) -> Self {
        Self {
            inner: xavier_init(num_users, num_items, dim, seed),
        }
    }

    #[getter]
    fn num_users(&self) -> usize {
        self.inner.num_users()
    }

    #[getter]
    fn num_items(&self) -> usize {
        self.inner.num_items()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn user(&self, u: usize) -> PyResult<Vec<f64>> {
        if u >= self.inner.num_users() {
            return Err(PyValueError::new_err(format!("user {u} out of range")));
        }
        Ok(self.inner.user(u).to_vec())
    }

    fn item(&self, i: usize) -> PyResult<Vec<f64>> {
        if i >= self.inner.num_items() {
            return Err(PyValueError::new_err(format!("item {i} out of range")));
        }
        Ok(self.inner.item(i).to_vec())
    }

    fn to_lists(&self) -> Vec<Vec<f64>> {
        (0..self.inner.num_nodes()).map(|v| self.inner.node(v).to_vec()).collect()
    }

    /// Scores of every item for user `u`.
    fn scores(&self, u: usize) -> PyResult<Vec<f64>> {
        evaluation::predict_scores(&self.inner, u).map_err(to_py)
    }

    fn save(&self, path: PathBuf, config_hash: u64) -> PyResult<()> {
        checkpoint::save(&path, &self.inner, config_hash, "").map_err(to_py)
    }

    /// Returns `(table, config_hash)`.
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<(Self, u64)> {
        let (inner, hash) = checkpoint::load(&path).map_err(to_py)?;
        Ok((Self { inner }, hash))
    }

    fn __repr__(&self) -> String {
        format!(
            "EmbeddingTable(users={}, items={}, dim={})",
            self.inner.num_users(),
            self.inner.num_items(),
            self.inner.dim()
        )
    }
}

#[pyfunction]
#[pyo3(signature = (kind, old, new, epsilon=1e-8))]
fn distance(kind: &str, old: Vec<f64>, new: Vec<f64>, epsilon: f64) -> PyResult<f64> {
    let metric = dist::Distance::with_epsilon(parse_kind(kind)?, epsilon).map_err(to_py)?;
    Ok(metric.eval(LayerVectorPair::new(&old, &new).map_err(to_py)?))
}

/// `(w_old, w_new)` for one node at the given distance.
#[pyfunction]
fn fusion_weights(config: PyRef<'_, PyFusionConfig>, distance: f64) -> PyResult<(f64, f64)> {
    let w = prop::fusion_weights(&config.inner, distance).map_err(to_py)?;
    Ok((w.w_old, w.w_new))
}

#[pyfunction]
fn forward(
    py: Python<'_>,
    config: PyRef<'_, PyFusionConfig>,
    graph: PyRef<'_, PyGraph>,
    base: PyRef<'_, PyEmbeddingTable>,
) -> PyResult<PyEmbeddingTable> {
    let (cfg, adj, table) = (&config.inner, &graph.adj, &base.inner);
    let inner = py.detach(|| prop::forward(cfg, adj, table)).map_err(to_py)?;
    Ok(PyEmbeddingTable { inner })
}

/// Trains from a Xavier start. Returns `(base_embeddings, best_epoch, losses)`.
#[pyfunction]
#[pyo3(signature = (config, graph, validation=None, dim=64, lr=1e-3, reg=1e-4, batch=2048, epochs=400, patience=5, seed=2024))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    config: PyRef<'_, PyFusionConfig>,
    graph: PyRef<'_, PyGraph>,
    validation: Option<Vec<Vec<usize>>>,
    dim: usize,
    lr: f64,
    reg: f64,
    batch: usize,
    epochs: usize,
    patience: usize,
    seed: u64,
) -> PyResult<(PyEmbeddingTable, usize, Vec<f64>)> {
    let g = &graph.inner;
    let mut validation = validation.unwrap_or_else(|| vec![Vec::new(); g.num_users()]);
    validation.iter_mut().for_each(|v| v.sort_unstable());
    let tc = TrainConfig {
        learning_rate: lr,
        reg_lambda: reg,
        batch_size: batch,
        max_epochs: epochs,
        patience,
        seed,
        ..TrainConfig::default()
    };
    let fusion = &config.inner;
    let outcome = py
        .detach(|| training::train(fusion, &tc, g, &validation, xavier_init(g.num_users(), g.num_items(), dim, seed)))
        .map_err(to_py)?;
    if let training::StopReason::Diverged(msg) = &outcome.stop {
        return Err(PyArithmeticError::new_err(format!("training diverged: {msg}")));
    }
    let losses = outcome.log.iter().map(|r| r.loss).collect();
    Ok((PyEmbeddingTable { inner: outcome.embeddings }, outcome.best_epoch, losses))
}

/// Macro-averaged metrics as `{"recall@K": .., "ndcg@K": .., "users": ..}`.
#[pyfunction]
#[pyo3(signature = (embeddings, train_items, test_items, cutoffs=vec![10, 20, 50]))]
fn evaluate<'py>(
    py: Python<'py>,
    embeddings: PyRef<'_, PyEmbeddingTable>,
    mut train_items: Vec<Vec<usize>>,
    mut test_items: Vec<Vec<usize>>,
    cutoffs: Vec<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    for list in train_items.iter_mut().chain(test_items.iter_mut()) {
        list.sort_unstable();
        list.dedup();
    }
    let table = &embeddings.inner;
    let report = py
        .detach(|| evaluation::evaluate(table, &train_items, &test_items, &cutoffs))
        .map_err(to_py)?;
    let out = PyDict::new(py);
    for (k, v) in &report.recall {
        out.set_item(format!("recall@{k}"), v)?;
    }
    for (k, v) in &report.ndcg {
        out.set_item(format!("ndcg@{k}"), v)?;
    }
    out.set_item("users", report.num_users_evaluated)?;
    Ok(out)
}

#[pyfunction]
fn recall_at_k(ranked: Vec<usize>, mut relevant: Vec<usize>, k: usize) -> f64 {
    relevant.sort_unstable();
    relevant.dedup();
    evaluation::recall_at_k(&ranked, &relevant, k)
}

#[pyfunction]
fn ndcg_at_k(ranked: Vec<usize>, mut relevant: Vec<usize>, k: usize) -> f64 {
    relevant.sort_unstable();
    relevant.dedup();
    evaluation::ndcg_at_k(&ranked, &relevant, k)
}

/// Top `k` unmasked items, best first; ties go to the lower index.
#[pyfunction]
fn top_k(scores: Vec<f64>, mut mask: Vec<usize>, k: usize) -> Vec<usize> {
    mask.sort_unstable();
    evaluation::topk_ranked(&scores, &mask, k)
}

#[pymodule]
fn sagcn_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGraph>()?;
    m.add_class::<PyFusionConfig>()?;
    m.add_class::<PyEmbeddingTable>()?;
    m.add_function(wrap_pyfunction!(distance, m)?)?;
    m.add_function(wrap_pyfunction!(fusion_weights, m)?)?;
    m.add_function(wrap_pyfunction!(forward, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(recall_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(ndcg_at_k, m)?)?;
    m.add_function(wrap_pyfunction!(top_k, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
