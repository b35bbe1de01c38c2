//! End-to-end runs: load data, train, evaluate on the test split and write
//! artifacts; α / metric / aggregator sweeps over the same path.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::{error, info};
use rayon::prelude::*;

use crate::distance::DistanceKind;
use crate::error::{Result, SagcnError};
use crate::evaluation::{self, MetricsReport};
use crate::graph::{InteractionGraph, NormalizedAdjacency};
use crate::propagation::{forward, Aggregator};
use crate::training::{self, xavier_init, EpochRecord, StopReason, TrainOutcome};

use super::checkpoint;
use super::config::RunConfig;
use super::ingest::ingest;
use super::split::PreparedDataset;

pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const LOG_FILE: &str = "train.log";
pub const REPORT_JSON: &str = "report.json";
pub const REPORT_TABLE: &str = "report.txt";
pub const SWEEP_FILE: &str = "sweep.tsv";

/// A prepared directory is loaded as-is; a file is ingested and split with
/// the config's split settings.
pub fn load_dataset(cfg: &RunConfig) -> Result<PreparedDataset> {
    let path = cfg
        .data
        .as_deref()
        .ok_or_else(|| SagcnError::Config("no dataset given (use --data PATH)".into()))?;
    if path.is_dir() {
        PreparedDataset::load(path)
    } else if path.exists() {
        PreparedDataset::from_interactions(ingest(path)?, &cfg.split_spec())
    } else {
        Err(SagcnError::Data(format!("dataset {} does not exist", path.display())))
    }
}

#[derive(Debug, Clone)]
pub struct TrainArtifacts {
    pub out_dir: PathBuf,
    pub report: MetricsReport,
    pub outcome: TrainOutcome,
}

fn write_log(path: &Path, log: &[EpochRecord]) -> Result<()> {
    let mut body = String::from(EpochRecord::HEADER);
    body.push('\n');
    for r in log {
        body.push_str(&r.to_tsv());
        body.push('\n');
    }
    super::write_atomic(path, body.as_bytes())
}

fn write_report(dir: &Path, report: &MetricsReport) -> Result<()> {
    let json = serde_json::to_string_pretty(&report.to_json())?;
    super::write_atomic(&dir.join(REPORT_JSON), json.as_bytes())?;
    super::write_atomic(&dir.join(REPORT_TABLE), format!("{report}\n").as_bytes())
}

/// Test-split report for trained base embeddings.
fn test_report(cfg: &RunConfig, data: &PreparedDataset, graph: &InteractionGraph, base: &crate::EmbeddingTable) -> Result<MetricsReport> {
    let adj = NormalizedAdjacency::from_graph(graph);
    let emb = forward(&cfg.fusion(), &adj, base)?;
    let mut report = evaluation::evaluate(&emb, &data.split.known_items(), &data.split.test_items(), &cfg.cutoffs)?;
    report.seed = cfg.seed;
    report.config_hash = cfg.config_hash();
    Ok(report)
}

/// Trains, evaluates on the test split and writes the checkpoint, training
/// log and report into `cfg.out`.
///
/// On divergence the last finite parameters are still written before the
/// numeric error is returned.
pub fn run_train(cfg: &RunConfig) -> Result<TrainArtifacts> {
    cfg.validate()?;
    let data = load_dataset(cfg)?;
    let graph = data.split.train_graph()?;
    info!(
        "training {} on {} users, {} items, {} edges",
        cfg.aggregator,
        graph.num_users(),
        graph.num_items(),
        graph.num_edges()
    );
    let init = xavier_init(graph.num_users(), graph.num_items(), cfg.dim, cfg.seed);
    let outcome = training::train(&cfg.fusion(), &cfg.train_config(), &graph, &data.split.validation_items(), init)?;

    std::fs::create_dir_all(&cfg.out)?;
    checkpoint::save(&cfg.out.join(CHECKPOINT_FILE), &outcome.embeddings, cfg.config_hash(), &cfg.to_kv())?;
    write_log(&cfg.out.join(LOG_FILE), &outcome.log)?;

    if let StopReason::Diverged(msg) = &outcome.stop {
        return Err(SagcnError::Diverged {
            epoch: outcome.log.len() + 1,
            msg: msg.clone(),
        });
    }

    let mut report = test_report(cfg, &data, &graph, &outcome.embeddings)?;
    report.epoch = outcome.best_epoch;
    write_report(&cfg.out, &report)?;
    Ok(TrainArtifacts {
        out_dir: cfg.out.clone(),
        report,
        outcome,
    })
}

/// Re-evaluates a saved checkpoint on the test split of `cfg.data`.
pub fn run_evaluate(cfg: &RunConfig, checkpoint_path: &Path) -> Result<MetricsReport> {
    cfg.validate()?;
    let (base, hash) = checkpoint::load(checkpoint_path)?;
    let data = load_dataset(cfg)?;
    let graph = data.split.train_graph()?;
    if base.num_users() != graph.num_users() || base.num_items() != graph.num_items() {
        return Err(SagcnError::Checkpoint(format!(
            "checkpoint is {}x{} but dataset is {}x{}",
            base.num_users(),
            base.num_items(),
            graph.num_users(),
            graph.num_items()
        )));
    }
    let mut report = test_report(cfg, &data, &graph, &base)?;
    report.config_hash = hash;
    Ok(report)
}

/// The grid a sweep runs over. Mean-baseline runs ignore α and the metric
/// and appear once per seed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub alphas: Vec<f64>,
    pub distances: Vec<DistanceKind>,
    pub aggregators: Vec<Aggregator>,
    pub seeds: Vec<u64>,
}

impl SweepPlan {
    pub fn configs(&self, base: &RunConfig) -> Vec<RunConfig> {
        let mut out = Vec::new();
        for &seed in &self.seeds {
            for &agg in &self.aggregators {
                match agg {
                    Aggregator::MeanBaseline => {
                        let mut c = base.clone();
                        c.aggregator = agg;
                        c.seed = seed;
                        c.out = base.out.join(format!("mean-s{seed}"));
                        out.push(c);
                    }
                    Aggregator::SelfAdaptive => {
                        for &dist in &self.distances {
                            for &alpha in &self.alphas {
                                let mut c = base.clone();
                                c.aggregator = agg;
                                c.distance = dist;
                                c.alpha = alpha;
                                c.seed = seed;
                                c.out = base.out.join(format!("sagcn-{dist}-a{alpha}-s{seed}"));
                                out.push(c);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub aggregator: Aggregator,
    pub distance: Option<DistanceKind>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub seed: u64,
    pub result: std::result::Result<MetricsReport, String>,
}

impl SweepRow {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.result.as_ref().ok().and_then(|r| r.recall_at(k))
    }

    pub fn header(cutoffs: &[usize]) -> String {
        let mut h = String::from("aggregator\tdistance\talpha\tbeta\tseed\tstatus");
        for k in cutoffs {
            let _ = write!(h, "\trecall@{k}");
        }
        for k in cutoffs {
            let _ = write!(h, "\tndcg@{k}");
        }
        h.push_str("\tbest_epoch\tconfig_hash");
        h
    }

    pub fn to_tsv(&self, cutoffs: &[usize]) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "-".into());
        let mut s = format!(
            "{}\t{}\t{}\t{}\t{}",
            self.aggregator,
            opt(self.distance.map(|d| d.to_string())),
            opt(self.alpha.map(|a| a.to_string())),
            opt(self.beta.map(|b| b.to_string())),
            self.seed
        );
        match &self.result {
            Ok(r) => {
                s.push_str("\tok");
                for k in cutoffs {
                    let _ = write!(s, "\t{:.6}", r.recall_at(*k).unwrap_or(f64::NAN));
                }
                for k in cutoffs {
                    let _ = write!(s, "\t{:.6}", r.ndcg_at(*k).unwrap_or(f64::NAN));
                }
                let _ = write!(s, "\t{}\t{:016x}", r.epoch, r.config_hash);
            }
            Err(msg) => {
                let _ = write!(s, "\tfailed: {}", msg.replace(['\t', '\n'], " "));
                for _ in 0..2 * cutoffs.len() + 2 {
                    s.push_str("\t-");
                }
            }
        }
        s
    }
}

/// Runs every configuration of `plan` in its own output subdirectory and
/// writes `sweep.tsv` sorted by Recall@20, best first. Failed runs become
/// failed rows at the end.
pub fn run_sweep(base: &RunConfig, plan: &SweepPlan) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let configs = plan.configs(base);
    if configs.is_empty() {
        return Err(SagcnError::Config("sweep grid is empty".into()));
    }
    let mut rows: Vec<SweepRow> = configs
        .par_iter()
        .map(|c| {
            let adaptive = c.aggregator == Aggregator::SelfAdaptive;
            let result = run_train(c).map(|a| a.report).map_err(|e| {
                error!("sweep run {} failed: {e}", c.out.display());
                e.to_string()
            });
            SweepRow {
                aggregator: c.aggregator,
                distance: adaptive.then_some(c.distance),
                alpha: adaptive.then_some(c.alpha),
                beta: adaptive.then(|| c.effective_beta()),
                seed: c.seed,
                result,
            }
        })
        .collect();
    let key = |r: &SweepRow| r.recall_at(training::STOPPING_CUTOFF).unwrap_or(f64::NEG_INFINITY);
    // stable sort keeps grid order among ties
    rows.sort_by(|a, b| key(b).total_cmp(&key(a)));

    let mut body = SweepRow::header(&base.cutoffs);
    body.push('\n');
    for r in &rows {
        body.push_str(&r.to_tsv(&base.cutoffs));
        body.push('\n');
    }
    std::fs::create_dir_all(&base.out)?;
    super::write_atomic(&base.out.join(SWEEP_FILE), body.as_bytes())?;
    Ok(rows)
}

/// `users`, `items`, `interactions` and `sparsity` on one line.
pub fn density_report(graph: &InteractionGraph) -> String {
    format!(
        "users={}\titems={}\tinteractions={}\tsparsity={:.6}",
        graph.num_users(),
        graph.num_items(),
        graph.num_edges(),
        graph.sparsity()
    )
}
