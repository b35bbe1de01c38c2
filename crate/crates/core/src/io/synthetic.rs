//! Seeded two-block interaction data for smoke tests and demos.
//!
//! Users and items are split into two disjoint halves; every interaction
//! stays within its user's half. Within a half, items are drawn without
//! replacement with Zipf-like popularity `1 / (rank + 1)^exponent`, so there
//! is signal beyond block membership.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SagcnError};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoBlockSpec {
    pub num_users: usize,
    pub num_items: usize,
    pub per_user: usize,
    pub popularity_exponent: f64,
    pub seed: u64,
}

impl Default for TwoBlockSpec {
    fn default() -> Self {
        Self {
            num_users: 200,
            num_items: 200,
            per_user: 20,
            popularity_exponent: 1.0,
            seed: 7,
        }
    }
}

/// Block of a user or item index: 0 for the first half, 1 for the second.
pub fn block_of(index: usize, total: usize) -> usize {
    usize::from(index >= total / 2)
}

/// `(user, item)` pairs, grouped by user.
pub fn two_block(spec: &TwoBlockSpec) -> Result<Vec<(usize, usize)>> {
    let half_items = spec.num_items / 2;
    if spec.num_users < 2 || half_items == 0 {
        return Err(SagcnError::InvalidArgument(
            "two blocks need at least two users and two items".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let blocks = [0..half_items, half_items..spec.num_items];
    let mut records = Vec::with_capacity(spec.num_users * spec.per_user);
    for u in 0..spec.num_users {
        let range = blocks[block_of(u, spec.num_users)].clone();
        let start = range.start;
        let pool: Vec<usize> = range.collect();
        if spec.per_user > pool.len() {
            return Err(SagcnError::InvalidArgument(format!("block of {} items cannot supply {} per user", pool.len(), spec.per_user)));
        }
        let picked = pool
            .choose_multiple_weighted(&mut rng, spec.per_user, |&i| {
                1.0 / ((i - start + 1) as f64).powf(spec.popularity_exponent)
            })
            .map_err(|e| SagcnError::InvalidArgument(e.to_string()))?;
        records.extend(picked.map(|&i| (u, i)));
    }
    Ok(records)
}

/// Tab-separated `u<idx>\ti<idx>` lines with a header.
pub fn to_text(records: &[(usize, usize)]) -> String {
    let mut s = String::from("user\titem\n");
    for (u, i) in records {
        let _ = writeln!(s, "u{u}\ti{i}");
    }
    s
}

pub fn write_two_block(path: &Path, spec: &TwoBlockSpec) -> Result<()> {
    super::write_atomic(path, to_text(&two_block(spec)?).as_bytes())
}
