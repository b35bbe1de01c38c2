//! Bipartite user-item interaction graph and the symmetric-normalized
//! adjacency operator used by propagation.
//!
//! Node indexing in the joint space is users first (`0..M`) then items
//! (`M..M+N`).

use ndarray::{Array2, ArrayView2, Axis, Zip};

use crate::error::{Result, SagcnError};

/// Implicit-feedback graph with deduplicated binary edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionGraph {
    num_users: usize,
    num_items: usize,
    edges: Vec<(usize, usize)>,
    user_neighbors: Vec<Vec<usize>>,
    item_neighbors: Vec<Vec<usize>>,
}

impl InteractionGraph {
    /// Builds a graph from already-remapped `(user, item)` pairs.
    ///
    /// Duplicate pairs collapse to a single edge. Any index outside the
    /// declared `num_users` x `num_items` range is rejected.
    pub fn new(num_users: usize, num_items: usize, records: &[(usize, usize)]) -> Result<Self> {
        let mut user_neighbors = vec![Vec::new(); num_users];
        for &(u, i) in records {
            if u >= num_users {
                return Err(SagcnError::OutOfRange {
                    what: "user",
                    index: u,
                    limit: num_users,
                });
            }
            if i >= num_items {
                return Err(SagcnError::OutOfRange {
                    what: "item",
                    index: i,
                    limit: num_items,
                });
            }
            user_neighbors[u].push(i);
        }

        let mut item_neighbors = vec![Vec::new(); num_items];
        let mut edges = Vec::with_capacity(records.len());
        for (u, items) in user_neighbors.iter_mut().enumerate() {
            items.sort_unstable();
            items.dedup();
            for &i in items.iter() {
                edges.push((u, i));
                // users visited in ascending order, so item lists come out sorted
                item_neighbors[i].push(u);
            }
        }

        Ok(Self {
            num_users,
            num_items,
            edges,
            user_neighbors,
            item_neighbors,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    /// Edges sorted by `(user, item)`.
    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn user_neighbors(&self, user: usize) -> &[usize] {
        &self.user_neighbors[user]
    }

    pub fn item_neighbors(&self, item: usize) -> &[usize] {
        &self.item_neighbors[item]
    }

    pub fn all_user_neighbors(&self) -> &[Vec<usize>] {
        &self.user_neighbors
    }

    pub fn has_edge(&self, user: usize, item: usize) -> bool {
        self.user_neighbors
            .get(user)
            .is_some_and(|items| items.binary_search(&item).is_ok())
    }

    /// Fraction of the `M x N` interaction matrix that is empty.
    pub fn sparsity(&self) -> f64 {
        let cells = self.num_users as f64 * self.num_items as f64;
        if cells == 0.0 {
            return 0.0;
        }
        1.0 - self.edges.len() as f64 / cells
    }
}

/// Row-compressed `D^{-1/2} A D^{-1/2}` over the joint user+item node space.
///
/// Only the off-diagonal bipartite blocks are populated; there are no
/// self-loops. Rows are sorted by column so that every gather is performed
/// in a fixed order.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency {
    num_users: usize,
    num_items: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
    degrees: Vec<usize>,
}

impl NormalizedAdjacency {
    pub fn from_graph(graph: &InteractionGraph) -> Self {
        let m = graph.num_users();
        let n = graph.num_items();
        let mut degrees = Vec::with_capacity(m + n);
        degrees.extend(graph.user_neighbors.iter().map(Vec::len));
        degrees.extend(graph.item_neighbors.iter().map(Vec::len));

        let nnz = 2 * graph.num_edges();
        let mut row_ptr = Vec::with_capacity(m + n + 1);
        let mut col_idx = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_ptr.push(0);

        for (u, items) in graph.user_neighbors.iter().enumerate() {
            let du = degrees[u] as f64;
            for &i in items {
                let di = degrees[m + i] as f64;
                col_idx.push(m + i);
                values.push(1.0 / (du * di).sqrt());
            }
            row_ptr.push(col_idx.len());
        }
        for (i, users) in graph.item_neighbors.iter().enumerate() {
            let di = degrees[m + i] as f64;
            for &u in users {
                let du = degrees[u] as f64;
                col_idx.push(u);
                // same expression as the user row so both directions are bitwise equal
                values.push(1.0 / (du * di).sqrt());
            }
            row_ptr.push(col_idx.len());
        }

        Self {
            num_users: m,
            num_items: n,
            row_ptr,
            col_idx,
            values,
            degrees,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_nodes(&self) -> usize {
        self.num_users + self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn degrees(&self) -> &[usize] {
        &self.degrees
    }

    /// `(column, weight)` pairs of one row of the joint operator.
    pub fn row(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[node]..self.row_ptr[node + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// Stored weight for `(row, col)`, or 0 when absent.
    pub fn weight(&self, row: usize, col: usize) -> f64 {
        let span = self.row_ptr[row]..self.row_ptr[row + 1];
        match self.col_idx[span.clone()].binary_search(&col) {
            Ok(pos) => self.values[span.start + pos],
            Err(_) => 0.0,
        }
    }

    /// Computes `Â · X` for a `(M+N) x d` row matrix.
    ///
    /// Rows of zero-degree nodes come out as zeros. The operator is
    /// symmetric, so this is also the transpose product used by the
    /// backward pass.
    pub fn apply(&self, input: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        if input.nrows() != self.num_nodes() {
            return Err(SagcnError::Shape(format!(
                "adjacency has {} nodes, embedding table has {} rows",
                self.num_nodes(),
                input.nrows()
            )));
        }
        let mut out = Array2::<f64>::zeros(input.raw_dim());
        Zip::indexed(out.axis_iter_mut(Axis(0))).par_for_each(|node, mut row| {
            for (col, w) in self.row(node) {
                row.scaled_add(w, &input.row(col));
            }
        });
        Ok(out)
    }
}
