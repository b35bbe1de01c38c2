use ndarray::Array2;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::propagation::EmbeddingTable;

/// Xavier-uniform half-width for a `rows x dim` matrix.
pub fn xavier_bound(rows: usize, dim: usize) -> f64 {
    (6.0 / (rows + dim) as f64).sqrt()
}

/// Uniform Xavier initialization with fan-in = row count and fan-out = `dim`,
/// applied separately to the user and item matrices.
pub fn xavier_init(num_users: usize, num_items: usize, dim: usize, seed: u64) -> EmbeddingTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut block = |rows: usize| {
        let bound = xavier_bound(rows, dim);
        let dist = Uniform::new_inclusive(-bound, bound);
        Array2::from_shape_simple_fn((rows, dim), || dist.sample(&mut rng))
    };
    let users = block(num_users);
    let items = block(num_items);
    EmbeddingTable::from_parts(users, items).expect("blocks share dim")
}
