//! Uniform BPR triple sampling: a training edge is drawn uniformly, then a
//! negative item is drawn uniformly with rejection.

use log::warn;
use rand::Rng;

use crate::graph::InteractionGraph;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BprTriple {
    pub user: usize,
    pub pos_item: usize,
    pub neg_item: usize,
}

/// Draws up to `size` triples. Edges whose user has interacted with every
/// item cannot produce a negative and are skipped.
pub fn sample_batch<R: Rng>(graph: &InteractionGraph, size: usize, rng: &mut R) -> Vec<BprTriple> {
    let edges = graph.edges();
    let num_items = graph.num_items();
    let mut batch = Vec::with_capacity(size);
    if edges.is_empty() {
        return batch;
    }
    let mut skipped = 0usize;
    for _ in 0..size {
        let (user, pos_item) = edges[rng.gen_range(0..edges.len())];
        let seen = graph.user_neighbors(user);
        if seen.len() >= num_items {
            skipped += 1;
            continue;
        }
        let neg_item = loop {
            let j = rng.gen_range(0..num_items);
            if seen.binary_search(&j).is_err() {
                break j;
            }
        };
        batch.push(BprTriple {
            user,
            pos_item,
            neg_item,
        });
    }
    if skipped > 0 {
        warn!("skipped {skipped} samples from users with no negative items");
    }
    batch
}
