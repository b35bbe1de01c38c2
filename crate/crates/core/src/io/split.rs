//! Seeded per-user train / validation / test splitting and the on-disk
//! layout of a prepared dataset directory.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SagcnError};
use crate::graph::InteractionGraph;

use super::ingest::{read_pairs, write_pairs, IdMap, Interactions};

pub const TRAIN_FILE: &str = "train.tsv";
pub const VALID_FILE: &str = "valid.tsv";
pub const TEST_FILE: &str = "test.tsv";
pub const USERS_FILE: &str = "users.txt";
pub const ITEMS_FILE: &str = "items.txt";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSpec {
    pub train_fraction: f64,
    /// Share of each user's training interactions held out for early stopping.
    pub validation_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            validation_fraction: 0.1,
            seed: 2024,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, f) in [
            ("train fraction", self.train_fraction),
            ("validation fraction", self.validation_fraction),
        ] {
            if !(f > 0.0 && f < 1.0) {
                return Err(SagcnError::Config(format!("{name} must lie in (0, 1), got {f}")));
            }
        }
        Ok(())
    }
}

/// Disjoint edge sets over one shared index space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub num_users: usize,
    pub num_items: usize,
    pub train: Vec<(usize, usize)>,
    pub validation: Vec<(usize, usize)>,
    pub test: Vec<(usize, usize)>,
}

fn floor_share(n: usize, fraction: f64) -> usize {
    // guard against 0.8 * 10 = 7.999...
    (n as f64 * fraction + 1e-9).floor() as usize
}

/// Splits each user's interactions after a seeded shuffle.
///
/// `floor(n * train_fraction)` (at least one) go to training and the rest to
/// test; users with a single interaction stay entirely in training. From a
/// user's training share, `max(1, floor(n_train * validation_fraction))`
/// interactions move to validation as long as one training edge remains.
pub fn split(num_users: usize, num_items: usize, records: &[(usize, usize)], spec: &SplitSpec) -> Result<DatasetSplit> {
    spec.validate()?;
    let mut per_user = vec![Vec::new(); num_users];
    for &(u, i) in records {
        if u >= num_users || i >= num_items {
            return Err(SagcnError::OutOfRange {
                what: "record",
                index: u.max(i),
                limit: num_users.max(num_items),
            });
        }
        per_user[u].push(i);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut out = DatasetSplit {
        num_users,
        num_items,
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (u, items) in per_user.iter_mut().enumerate() {
        items.sort_unstable();
        items.dedup();
        items.shuffle(&mut rng);
        let n = items.len();
        let n_train = floor_share(n, spec.train_fraction).max(1).min(n);
        let n_valid = if n_train >= 2 {
            floor_share(n_train, spec.validation_fraction).max(1).min(n_train - 1)
        } else {
            0
        };
        let keep = n_train - n_valid;
        out.train.extend(items[..keep].iter().map(|&i| (u, i)));
        out.validation.extend(items[keep..n_train].iter().map(|&i| (u, i)));
        out.test.extend(items[n_train..].iter().map(|&i| (u, i)));
    }
    Ok(out)
}

fn by_user(num_users: usize, pairs: &[(usize, usize)]) -> Vec<Vec<usize>> {
    let mut lists = vec![Vec::new(); num_users];
    for &(u, i) in pairs {
        lists[u].push(i);
    }
    for l in &mut lists {
        l.sort_unstable();
    }
    lists
}

impl DatasetSplit {
    pub fn train_graph(&self) -> Result<InteractionGraph> {
        InteractionGraph::new(self.num_users, self.num_items, &self.train)
    }

    pub fn train_items(&self) -> Vec<Vec<usize>> {
        by_user(self.num_users, &self.train)
    }

    pub fn validation_items(&self) -> Vec<Vec<usize>> {
        by_user(self.num_users, &self.validation)
    }

    pub fn test_items(&self) -> Vec<Vec<usize>> {
        by_user(self.num_users, &self.test)
    }

    /// Training plus validation items: everything masked at test time.
    pub fn known_items(&self) -> Vec<Vec<usize>> {
        let mut all = self.train.clone();
        all.extend_from_slice(&self.validation);
        by_user(self.num_users, &all)
    }

    pub fn num_interactions(&self) -> usize {
        self.train.len() + self.validation.len() + self.test.len()
    }
}

/// A split together with the token maps it was built from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PreparedDataset {
    pub split: DatasetSplit,
    pub users: IdMap,
    pub items: IdMap,
}

impl PreparedDataset {
    pub fn from_interactions(data: Interactions, spec: &SplitSpec) -> Result<Self> {
        let split = split(data.num_users(), data.num_items(), &data.records, spec)?;
        Ok(Self {
            split,
            users: data.users,
            items: data.items,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_pairs(&dir.join(TRAIN_FILE), &self.split.train)?;
        write_pairs(&dir.join(VALID_FILE), &self.split.validation)?;
        write_pairs(&dir.join(TEST_FILE), &self.split.test)?;
        self.users.save(&dir.join(USERS_FILE))?;
        self.items.save(&dir.join(ITEMS_FILE))?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let users = IdMap::load(&dir.join(USERS_FILE))?;
        let items = IdMap::load(&dir.join(ITEMS_FILE))?;
        let split = DatasetSplit {
            num_users: users.len(),
            num_items: items.len(),
            train: read_pairs(&dir.join(TRAIN_FILE))?,
            validation: read_pairs(&dir.join(VALID_FILE))?,
            test: read_pairs(&dir.join(TEST_FILE))?,
        };
        for &(u, i) in split.train.iter().chain(&split.validation).chain(&split.test) {
            if u >= split.num_users || i >= split.num_items {
                return Err(SagcnError::Data(format!(
                    "{}: pair ({u}, {i}) outside the id maps",
                    dir.display()
                )));
            }
        }
        Ok(Self { split, users, items })
    }
}
