//! BPR training of the base embeddings with Adam and early stopping on
//! validation Recall@20.

mod adam;
mod init;
mod loss;
mod sampler;

use std::time::Instant;

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, SagcnError};
use crate::evaluation;
use crate::graph::{InteractionGraph, NormalizedAdjacency};
use crate::propagation::{forward, EmbeddingTable, FusionConfig};

pub use adam::{adam_step, OptimizerState};
pub use init::{xavier_bound, xavier_init};
pub use loss::{batch_loss, bpr_loss, loss_and_gradient, loss_gradient, sigmoid, softplus};
pub use sampler::{sample_batch, BprTriple};

/// Early stopping always watches Recall at this cutoff.
pub const STOPPING_CUTOFF: usize = 20;

/// Offset applied to the run seed for the sampling stream, so that the
/// initializer and the sampler never share a ChaCha stream.
const SAMPLER_SEED_OFFSET: u64 = 0x5851_f42d_4c95_7f2d;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub reg_lambda: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            reg_lambda: 1e-4,
            batch_size: 2048,
            max_epochs: 1000,
            patience: 5,
            seed: 2024,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(SagcnError::Config(format!("{name} must be > 0, got {v}")))
            }
        };
        positive("learning rate", self.learning_rate)?;
        positive("adam_eps", self.adam_eps)?;
        if !(self.reg_lambda >= 0.0 && self.reg_lambda.is_finite()) {
            return Err(SagcnError::Config(format!("reg must be >= 0, got {}", self.reg_lambda)));
        }
        for (name, b) in [("adam_beta1", self.adam_beta1), ("adam_beta2", self.adam_beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(SagcnError::Config(format!("{name} must lie in [0, 1), got {b}")));
            }
        }
        if self.batch_size == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(SagcnError::Config("batch, epochs and patience must be >= 1".into()));
        }
        Ok(())
    }
}

/// Patience counter over a maximized metric.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
    since_best: usize,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
            since_best: 0,
        }
    }

    /// Records an epoch's value; returns true if it is a new best.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        match self.best {
            Some((_, best)) if value <= best => {
                self.since_best += 1;
                false
            }
            _ => {
                self.best = Some((epoch, value));
                self.since_best = 0;
                true
            }
        }
    }

    pub fn should_stop(&self) -> bool {
        self.since_best >= self.patience
    }

    pub fn best(&self) -> Option<(usize, f64)> {
        self.best
    }
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Summed batch losses divided by the number of sampled triples.
    pub loss: f64,
    pub valid_recall: Option<f64>,
    pub wall_seconds: f64,
}

impl EpochRecord {
    pub const HEADER: &'static str = "epoch\tloss\tvalid_recall@20\twall_time";

    /// Tab-separated `epoch, loss, recall, seconds`.
    pub fn to_tsv(&self) -> String {
        let recall = self
            .valid_recall
            .map_or_else(|| "nan".to_string(), |r| format!("{r:.6}"));
        format!("{}\t{:.6}\t{}\t{:.3}", self.epoch, self.loss, recall, self.wall_seconds)
    }
}

#[derive(Debug, Clone)]
pub enum StopReason {
    MaxEpochs,
    Patience,
    Diverged(String),
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Base embeddings from the best validation epoch.
    pub embeddings: EmbeddingTable,
    pub best_epoch: usize,
    pub log: Vec<EpochRecord>,
    pub stop: StopReason,
}

impl TrainOutcome {
    pub fn diverged(&self) -> bool {
        matches!(self.stop, StopReason::Diverged(_))
    }
}

/// Trains `initial` on the edges of `graph`.
///
/// `validation[u]` holds user `u`'s sorted validation items. When no user has
/// validation items, every epoch counts as an improvement and the last epoch
/// is returned.
pub fn train(
    fusion: &FusionConfig,
    cfg: &TrainConfig,
    graph: &InteractionGraph,
    validation: &[Vec<usize>],
    initial: EmbeddingTable,
) -> Result<TrainOutcome> {
    fusion.validate()?;
    cfg.validate()?;
    if initial.num_users() != graph.num_users() || initial.num_items() != graph.num_items() {
        return Err(SagcnError::Shape("initial table does not match the graph".into()));
    }

    let adj = NormalizedAdjacency::from_graph(graph);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(SAMPLER_SEED_OFFSET));
    let mut params = initial;
    let mut optimizer = OptimizerState::new(&params);
    let mut stopper = EarlyStopping::new(cfg.patience);
    let mut best_params = params.clone();
    let mut best_epoch = 0;
    let mut log = Vec::new();
    let has_validation = validation.iter().any(|v| !v.is_empty());
    let started = Instant::now();

    let edges = graph.num_edges();
    let num_batches = edges.div_ceil(cfg.batch_size).max(1);
    let mut stop = StopReason::MaxEpochs;

    'epochs: for epoch in 1..=cfg.max_epochs {
        let mut loss_sum = 0.0;
        let mut triples = 0usize;
        for b in 0..num_batches {
            let size = if b + 1 == num_batches {
                edges - b * cfg.batch_size
            } else {
                cfg.batch_size
            };
            let batch = sample_batch(graph, size, &mut rng);
            let step = loss_and_gradient(fusion, cfg.reg_lambda, &adj, &params, &batch)
                .and_then(|(loss, grad)| {
                    if loss.is_finite() {
                        Ok((loss, grad))
                    } else {
                        Err(SagcnError::NonFinite("batch loss".into()))
                    }
                });
            let (loss, grad) = match step {
                Ok(v) => v,
                Err(e @ SagcnError::NonFinite(_)) => {
                    warn!("epoch {epoch}: {e}; keeping last finite parameters");
                    stop = StopReason::Diverged(e.to_string());
                    break 'epochs;
                }
                Err(e) => return Err(e),
            };
            let before = params.clone();
            adam_step(&mut params, &mut optimizer, &grad, cfg)?;
            if !params.is_finite() {
                params = before;
                stop = StopReason::Diverged(format!("non-finite parameters after epoch {epoch} update"));
                break 'epochs;
            }
            loss_sum += loss;
            triples += batch.len();
        }

        let valid_recall = if has_validation {
            let emb = forward(fusion, &adj, &params)?;
            let report = evaluation::evaluate(&emb, graph.all_user_neighbors(), validation, &[STOPPING_CUTOFF])?;
            report.recall_at(STOPPING_CUTOFF)
        } else {
            None
        };
        let record = EpochRecord {
            epoch,
            loss: loss_sum / triples.max(1) as f64,
            valid_recall,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        info!("{}", record.to_tsv());
        log.push(record);

        let metric = valid_recall.unwrap_or(epoch as f64);
        if stopper.observe(epoch, metric) {
            best_params = params.clone();
            best_epoch = epoch;
        }
        if stopper.should_stop() {
            stop = StopReason::Patience;
            break;
        }
    }

    if best_epoch == 0 {
        // diverged before any epoch finished
        best_params = params;
    }
    Ok(TrainOutcome {
        embeddings: best_params,
        best_epoch,
        log,
        stop,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distance::DistanceKind;

    #[test]
    fn patience_counter() {
        let mut s = EarlyStopping::new(5);
        let seq = [0.10, 0.11, 0.10, 0.10, 0.10, 0.10, 0.10];
        let mut stopped_at = None;
        for (e, v) in seq.iter().enumerate() {
            s.observe(e + 1, *v);
            if s.should_stop() {
                stopped_at = Some(e + 1);
                break;
            }
        }
        assert_eq!(stopped_at, Some(7));
        assert_eq!(s.best(), Some((2, 0.11)));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            batch_size: 0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
        let bad = TrainConfig {
            learning_rate: -1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    fn toy() -> (InteractionGraph, Vec<Vec<usize>>) {
        let records: Vec<(usize, usize)> = (0..6).flat_map(|u| (0..3).map(move |k| (u, (u % 2) * 4 + k))).collect();
        let g = InteractionGraph::new(6, 8, &records).unwrap();
        let valid = (0..6).map(|u| vec![(u % 2) * 4 + 3]).collect();
        (g, valid)
    }

    #[test]
    fn single_epoch_cap() {
        let (g, valid) = toy();
        let cfg = TrainConfig {
            max_epochs: 1,
            ..TrainConfig::default()
        };
        let out = train(&FusionConfig::new(DistanceKind::Euclidean), &cfg, &g, &valid, xavier_init(6, 8, 4, 1)).unwrap();
        assert_eq!(out.log.len(), 1);
        assert_eq!(out.best_epoch, 1);
        assert!(matches!(out.stop, StopReason::MaxEpochs));
    }

    #[test]
    fn deterministic_given_seed() {
        let (g, valid) = toy();
        let cfg = TrainConfig {
            max_epochs: 8,
            learning_rate: 0.01,
            ..TrainConfig::default()
        };
        let fusion = FusionConfig::new(DistanceKind::Cosine);
        let a = train(&fusion, &cfg, &g, &valid, xavier_init(6, 8, 4, 1)).unwrap();
        let b = train(&fusion, &cfg, &g, &valid, xavier_init(6, 8, 4, 1)).unwrap();
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.best_epoch, b.best_epoch);
    }

    #[test]
    fn best_epoch_has_max_recall() {
        let (g, valid) = toy();
        let cfg = TrainConfig {
            max_epochs: 30,
            learning_rate: 0.05,
            patience: 3,
            ..TrainConfig::default()
        };
        let out = train(&FusionConfig::new(DistanceKind::Euclidean), &cfg, &g, &valid, xavier_init(6, 8, 4, 9)).unwrap();
        let best = out.log.iter().filter_map(|r| r.valid_recall).fold(f64::MIN, f64::max);
        assert_eq!(out.log[out.best_epoch - 1].valid_recall, Some(best));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let (g, valid) = toy();
        let err = train(
            &FusionConfig::new(DistanceKind::Euclidean),
            &TrainConfig::default(),
            &g,
            &valid,
            xavier_init(3, 8, 4, 1),
        );
        assert!(err.is_err());
    }
}
