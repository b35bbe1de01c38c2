//! Full-ranking evaluation: every item is scored for every user, training
//! interactions are masked out, and Recall@K / NDCG@K are macro-averaged.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SagcnError};
use crate::propagation::EmbeddingTable;

pub const DEFAULT_CUTOFFS: [usize; 3] = [10, 20, 50];

/// `score_i = e_u · e_i` for every item.
pub fn predict_scores(emb: &EmbeddingTable, user: usize) -> Result<Vec<f64>> {
    if user >= emb.num_users() {
        return Err(SagcnError::OutOfRange {
            what: "user",
            index: user,
            limit: emb.num_users(),
        });
    }
    let eu = emb.user(user);
    Ok((0..emb.num_items()).map(|i| dot(eu, emb.item(i))).collect())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Descending score, ascending index on ties.
fn rank_order(scores: &[f64], a: usize, b: usize) -> Ordering {
    scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
}

/// The `k` best unmasked items, best first. `mask` must be sorted.
///
/// If fewer than `k` items survive the mask the list is shorter than `k`.
pub fn topk_ranked(scores: &[f64], mask: &[usize], k: usize) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..scores.len())
        .filter(|i| mask.binary_search(i).is_err())
        .collect();
    if k < pool.len() {
        pool.select_nth_unstable_by(k, |&a, &b| rank_order(scores, a, b));
        pool.truncate(k);
    } else if k > pool.len() {
        warn!("requested top-{k} but only {} unmasked items remain", pool.len());
    }
    pool.sort_unstable_by(|&a, &b| rank_order(scores, a, b));
    pool
}

/// Fraction of `relevant` found in the first `k` entries of `ranked`.
/// `relevant` must be sorted and non-empty.
pub fn recall_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let hits = ranked
        .iter()
        .take(k)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count();
    hits as f64 / relevant.len() as f64
}

/// Binary-relevance NDCG with discount `1 / log2(rank + 1)`, ranks from 1.
/// `relevant` must be sorted and non-empty.
pub fn ndcg_at_k(ranked: &[usize], relevant: &[usize], k: usize) -> f64 {
    if relevant.is_empty() {
        return 0.0;
    }
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .filter(|(_, i)| relevant.binary_search(i).is_ok())
        .map(|(r, _)| 1.0 / ((r + 2) as f64).log2())
        .sum();
    let idcg: f64 = (0..k.min(relevant.len()))
        .map(|r| 1.0 / ((r + 2) as f64).log2())
        .sum();
    dcg / idcg
}

/// One user's ranking problem.
#[derive(Debug, Clone)]
pub struct RankingTask<'a> {
    pub user: usize,
    /// Sorted items the user already interacted with in training.
    pub candidate_mask: &'a [usize],
    /// Sorted held-out items.
    pub relevant: &'a [usize],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub recall: BTreeMap<usize, f64>,
    pub ndcg: BTreeMap<usize, f64>,
    pub num_users_evaluated: usize,
    pub config_hash: u64,
    pub seed: u64,
    pub epoch: usize,
}

impl MetricsReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.get(&k).copied()
    }

    pub fn ndcg_at(&self, k: usize) -> Option<f64> {
        self.ndcg.get(&k).copied()
    }

    pub fn cutoffs(&self) -> impl Iterator<Item = usize> + '_ {
        self.recall.keys().copied()
    }

    /// Flat key-value document: `recall@K`, `ndcg@K`, `users`, `seed`,
    /// `config_hash`, `epoch`.
    pub fn to_json(&self) -> serde_json::Value {
        let mut doc = serde_json::Map::new();
        for (k, v) in &self.recall {
            doc.insert(format!("recall@{k}"), (*v).into());
        }
        for (k, v) in &self.ndcg {
            doc.insert(format!("ndcg@{k}"), (*v).into());
        }
        doc.insert("users".into(), self.num_users_evaluated.into());
        doc.insert("seed".into(), self.seed.into());
        doc.insert("config_hash".into(), format!("{:016x}", self.config_hash).into());
        doc.insert("epoch".into(), self.epoch.into());
        serde_json::Value::Object(doc)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self> {
        let obj = value
            .as_object()
            .ok_or_else(|| SagcnError::Data("report is not a JSON object".into()))?;
        let mut recall = BTreeMap::new();
        let mut ndcg = BTreeMap::new();
        for (key, v) in obj {
            let parsed = |prefix: &str| -> Option<usize> { key.strip_prefix(prefix)?.parse().ok() };
            if let Some(k) = parsed("recall@") {
                recall.insert(k, v.as_f64().unwrap_or(f64::NAN));
            } else if let Some(k) = parsed("ndcg@") {
                ndcg.insert(k, v.as_f64().unwrap_or(f64::NAN));
            }
        }
        let field = |name: &str| {
            obj.get(name)
                .ok_or_else(|| SagcnError::Data(format!("report is missing `{name}`")))
        };
        let config_hash = u64::from_str_radix(field("config_hash")?.as_str().unwrap_or(""), 16)
            .map_err(|e| SagcnError::Data(format!("bad config_hash: {e}")))?;
        Ok(Self {
            recall,
            ndcg,
            num_users_evaluated: field("users")?.as_u64().unwrap_or(0) as usize,
            config_hash,
            seed: field("seed")?.as_u64().unwrap_or(0),
            epoch: obj.get("epoch").and_then(|v| v.as_u64()).unwrap_or(0) as usize,
        })
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<8} {:>10} {:>10}", "cutoff", "recall", "ndcg")?;
        for k in self.cutoffs() {
            writeln!(
                f,
                "{:<8} {:>10.6} {:>10.6}",
                format!("@{k}"),
                self.recall[&k],
                self.ndcg.get(&k).copied().unwrap_or(f64::NAN)
            )?;
        }
        write!(
            f,
            "users={} seed={} epoch={} config={:016x}",
            self.num_users_evaluated, self.seed, self.epoch, self.config_hash
        )
    }
}

/// Per-user metrics for one task at every cutoff.
fn score_task(emb: &EmbeddingTable, task: &RankingTask<'_>, cutoffs: &[usize]) -> Result<Vec<(f64, f64)>> {
    let scores = predict_scores(emb, task.user)?;
    let max_k = cutoffs.iter().copied().max().unwrap_or(0);
    let ranked = topk_ranked(&scores, task.candidate_mask, max_k);
    Ok(cutoffs
        .iter()
        .map(|&k| (recall_at_k(&ranked, task.relevant, k), ndcg_at_k(&ranked, task.relevant, k)))
        .collect())
}

/// Macro-averaged metrics over users with at least one held-out item.
///
/// `train_items[u]` and `test_items[u]` are sorted item lists per user.
pub fn evaluate(
    emb: &EmbeddingTable,
    train_items: &[Vec<usize>],
    test_items: &[Vec<usize>],
    cutoffs: &[usize],
) -> Result<MetricsReport> {
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(SagcnError::Config("cutoffs must be a non-empty list of positive integers".into()));
    }
    if !emb.is_finite() {
        return Err(SagcnError::NonFinite("embeddings passed to evaluation".into()));
    }
    let empty: Vec<usize> = Vec::new();
    let tasks: Vec<RankingTask<'_>> = test_items
        .iter()
        .enumerate()
        .filter(|(_, rel)| !rel.is_empty())
        .map(|(u, rel)| RankingTask {
            user: u,
            candidate_mask: train_items.get(u).unwrap_or(&empty),
            relevant: rel,
        })
        .collect();
    if tasks.is_empty() {
        return Err(SagcnError::EmptyReport);
    }

    let per_user: Vec<Vec<(f64, f64)>> = tasks
        .par_iter()
        .map(|t| score_task(emb, t, cutoffs))
        .collect::<Result<_>>()?;

    let n = tasks.len() as f64;
    let mut recall = BTreeMap::new();
    let mut ndcg = BTreeMap::new();
    for (c, &k) in cutoffs.iter().enumerate() {
        // fixed user order keeps the sum bitwise reproducible
        let (r, g) = per_user
            .iter()
            .fold((0.0, 0.0), |(r, g), m| (r + m[c].0, g + m[c].1));
        recall.insert(k, r / n);
        ndcg.insert(k, g / n);
    }
    Ok(MetricsReport {
        recall,
        ndcg,
        num_users_evaluated: tasks.len(),
        config_hash: 0,
        seed: 0,
        epoch: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn inner_product_scores() {
        let emb = EmbeddingTable::from_parts(array![[1.0, 2.0]], array![[3.0, 4.0], [0.0, 1.0]]).unwrap();
        assert_eq!(predict_scores(&emb, 0).unwrap(), vec![11.0, 2.0]);
        let zero = EmbeddingTable::from_parts(array![[0.0, 0.0]], array![[3.0, 4.0]]).unwrap();
        assert_eq!(predict_scores(&zero, 0).unwrap(), vec![0.0]);
        assert!(predict_scores(&emb, 1).is_err());
    }

    #[test]
    fn topk_basic_and_ties() {
        assert_eq!(topk_ranked(&[5.0, 1.0, 9.0], &[], 2), vec![2, 0]);
        assert_eq!(topk_ranked(&[5.0, 5.0, 1.0], &[], 2), vec![0, 1]);
        assert_eq!(topk_ranked(&[5.0, 1.0, 9.0], &[2], 2), vec![0, 1]);
    }

    #[test]
    fn topk_truncates_when_pool_small() {
        assert_eq!(topk_ranked(&[1.0, 2.0, 3.0], &[0, 1], 5), vec![2]);
    }

    #[test]
    fn recall_reference() {
        assert_eq!(recall_at_k(&[3, 1, 7], &[1, 9], 3), 0.5);
        assert_eq!(recall_at_k(&[3, 1, 7], &[1, 3], 3), 1.0);
    }

    #[test]
    fn ndcg_reference() {
        assert_eq!(ndcg_at_k(&[4, 0, 1], &[4], 10), 1.0);
        let v = ndcg_at_k(&[0, 4, 1], &[4], 10);
        assert!((v - 0.630_929_753_571_457_4).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&[0, 1, 2], &[4], 3), 0.0);
    }

    #[test]
    fn perfect_single_user() {
        let emb = EmbeddingTable::from_parts(array![[1.0]], array![[0.5], [2.0], [-1.0]]).unwrap();
        let report = evaluate(&emb, &[vec![0]], &[vec![1]], &DEFAULT_CUTOFFS).unwrap();
        for k in DEFAULT_CUTOFFS {
            assert_eq!(report.recall_at(k), Some(1.0));
            assert_eq!(report.ndcg_at(k), Some(1.0));
        }
    }

    #[test]
    fn macro_mean_of_two_users() {
        // user 0 ranks item 0 first, user 1 ranks item 0 first too but wants item 1
        let emb = EmbeddingTable::from_parts(array![[1.0], [1.0]], array![[2.0], [1.0]]).unwrap();
        let report = evaluate(&emb, &[vec![], vec![]], &[vec![0], vec![1]], &[1]).unwrap();
        assert_eq!(report.recall_at(1), Some(0.5));
        assert_eq!(report.num_users_evaluated, 2);
    }

    #[test]
    fn no_test_users_is_an_error() {
        let emb = EmbeddingTable::zeros(1, 2, 2);
        assert!(matches!(
            evaluate(&emb, &[vec![0]], &[vec![]], &[10]),
            Err(SagcnError::EmptyReport)
        ));
    }

    #[test]
    fn json_round_trip() {
        let emb = EmbeddingTable::from_parts(array![[1.0]], array![[0.5], [2.0], [-1.0]]).unwrap();
        let mut report = evaluate(&emb, &[vec![0]], &[vec![1, 2]], &DEFAULT_CUTOFFS).unwrap();
        report.config_hash = 0xdead_beef_0102_0304;
        report.seed = 7;
        let doc = report.to_json();
        assert!(doc.get("recall@20").is_some());
        assert_eq!(MetricsReport::from_json(&doc).unwrap(), report);
    }
}
